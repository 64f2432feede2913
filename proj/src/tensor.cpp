#include "qincompat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace qincompat {

std::size_t total_dim(const Systems& systems) {
    std::size_t d = 1;
    for (const auto& s : systems) d *= s.dim;
    return d;
}

std::vector<std::size_t> dims_of(const Systems& systems) {
    std::vector<std::size_t> dims;
    dims.reserve(systems.size());
    for (const auto& s : systems) dims.push_back(s.dim);
    return dims;
}

void validate_systems(const Systems& systems) {
    std::set<std::string> seen;
    for (const auto& s : systems) {
        if (s.dim == 0) throw LabelError("system '" + s.name + "' has dimension 0");
        if (!seen.insert(s.name).second) throw LabelError("duplicate system label '" + s.name + "'");
    }
}

Systems concat(const Systems& a, const Systems& b) {
    Systems out = a;
    out.insert(out.end(), b.begin(), b.end());
    validate_systems(out);
    return out;
}

std::vector<std::size_t> permutation_indices(const std::vector<std::size_t>& dims,
                                             const std::vector<std::size_t>& perm) {
    const std::size_t n = dims.size();
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    // Row-major strides of the old layout.
    std::vector<std::size_t> old_stride(n, 1);
    for (std::size_t k = n; k-- > 1;) old_stride[k - 1] = old_stride[k] * dims[k];
    std::vector<std::size_t> new_dims(n);
    for (std::size_t k = 0; k < n; ++k) new_dims[k] = dims[perm[k]];

    std::vector<std::size_t> out(total);
    std::vector<std::size_t> digit(n, 0);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t old = 0;
        for (std::size_t k = 0; k < n; ++k) old += digit[k] * old_stride[perm[k]];
        out[idx] = old;
        for (std::size_t k = n; k-- > 0;) {
            if (++digit[k] < new_dims[k]) break;
            digit[k] = 0;
        }
    }
    return out;
}

Matrix permute_factors(const Matrix& m, const std::vector<std::size_t>& dims,
                       const std::vector<std::size_t>& perm) {
    const auto idx = permutation_indices(dims, perm);
    const auto d = static_cast<Eigen::Index>(idx.size());
    if (m.rows() != d || m.cols() != d) throw DimensionError("permute_factors: size mismatch");
    Matrix out(d, d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index r = 0; r < d; ++r) out(r, c) = m(idx[r], idx[c]);
    return out;
}

Matrix trace_tail(const Matrix& m, std::size_t tail) {
    const auto t = static_cast<Eigen::Index>(tail);
    const Eigen::Index keep = m.rows() / t;
    Matrix out = Matrix::Zero(keep, keep);
    for (Eigen::Index c = 0; c < keep; ++c)
        for (Eigen::Index r = 0; r < keep; ++r)
            for (Eigen::Index k = 0; k < t; ++k) out(r, c) += m(r * t + k, c * t + k);
    return out;
}

Matrix trace_head(const Matrix& m, std::size_t head) {
    const auto h = static_cast<Eigen::Index>(head);
    const Eigen::Index keep = m.rows() / h;
    Matrix out = Matrix::Zero(keep, keep);
    for (Eigen::Index k = 0; k < h; ++k) out += m.block(k * keep, k * keep, keep, keep);
    return out;
}

// ---------------------------------------------------------------------------

HermitianBlock::HermitianBlock(Systems systems, Matrix entries)
    : systems_(std::move(systems)), entries_(std::move(entries)) {
    validate_systems(systems_);
    const auto d = static_cast<Eigen::Index>(total_dim(systems_));
    if (entries_.rows() != d || entries_.cols() != d)
        throw DimensionError("operator of size " + std::to_string(entries_.rows()) + "x" +
                             std::to_string(entries_.cols()) + " does not match systems of dimension " +
                             std::to_string(d));
}

HermitianBlock HermitianBlock::identity(Systems systems) {
    const auto d = static_cast<Eigen::Index>(total_dim(systems));
    return {std::move(systems), Matrix::Identity(d, d)};
}

HermitianBlock HermitianBlock::zero(Systems systems) {
    const auto d = static_cast<Eigen::Index>(total_dim(systems));
    return {std::move(systems), Matrix::Zero(d, d)};
}

HermitianBlock HermitianBlock::ket_bra(const SystemLabel& system, std::size_t row, std::size_t col) {
    auto d = static_cast<Eigen::Index>(system.dim);
    Matrix m = Matrix::Zero(d, d);
    m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = 1.0;
    return {{system}, m};
}

std::size_t HermitianBlock::position(const std::string& name) const {
    for (std::size_t k = 0; k < systems_.size(); ++k)
        if (systems_[k].name == name) return k;
    throw LabelError("unknown system label '" + name + "'");
}

bool HermitianBlock::has(const std::string& name) const {
    return std::any_of(systems_.begin(), systems_.end(), [&](const auto& s) { return s.name == name; });
}

const SystemLabel& HermitianBlock::system(const std::string& name) const { return systems_[position(name)]; }

bool HermitianBlock::is_hermitian(double tol) const {
    return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

HermitianBlock HermitianBlock::adjoint() const { return {systems_, entries_.adjoint()}; }

HermitianBlock HermitianBlock::permuted(const std::vector<std::string>& order) const {
    if (order.size() != systems_.size()) throw LabelError("permutation must name every system exactly once");
    std::vector<std::size_t> perm;
    Systems next;
    for (const auto& name : order) {
        perm.push_back(position(name));
        next.push_back(systems_[perm.back()]);
    }
    validate_systems(next);
    return {next, permute_factors(entries_, dims_of(systems_), perm)};
}

HermitianBlock HermitianBlock::renamed(const std::string& from, const std::string& to) const {
    Systems next = systems_;
    next[position(from)].name = to;
    return {next, entries_};
}

void HermitianBlock::require_same_systems(const HermitianBlock& other) const {
    if (systems_ != other.systems_) throw LabelError("operators live on different systems");
}

HermitianBlock& HermitianBlock::operator+=(const HermitianBlock& other) {
    require_same_systems(other);
    entries_ += other.entries_;
    return *this;
}

HermitianBlock& HermitianBlock::operator-=(const HermitianBlock& other) {
    require_same_systems(other);
    entries_ -= other.entries_;
    return *this;
}

HermitianBlock& HermitianBlock::operator*=(cplx s) {
    entries_ *= s;
    return *this;
}

HermitianBlock operator+(HermitianBlock a, const HermitianBlock& b) { return a += b; }
HermitianBlock operator-(HermitianBlock a, const HermitianBlock& b) { return a -= b; }
HermitianBlock operator*(cplx s, HermitianBlock a) { return a *= s; }

HermitianBlock operator*(const HermitianBlock& a, const HermitianBlock& b) {
    if (a.systems() != b.systems()) throw LabelError("operators live on different systems");
    return {a.systems(), a.matrix() * b.matrix()};
}

HermitianBlock StateVector::density() const {
    return {systems, amplitudes * amplitudes.adjoint()};
}

// ---------------------------------------------------------------------------

HermitianBlock kron(const HermitianBlock& a, const HermitianBlock& b) {
    const Matrix& x = a.matrix();
    const Matrix& y = b.matrix();
    Matrix out(x.rows() * y.rows(), x.cols() * y.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            out.block(r * y.rows(), c * y.cols(), y.rows(), y.cols()) = x(r, c) * y;
    return {concat(a.systems(), b.systems()), out};
}

HermitianBlock partial_trace(const HermitianBlock& op, const std::vector<std::string>& discard) {
    std::set<std::string> drop(discard.begin(), discard.end());
    for (const auto& name : drop) op.position(name);  // throws on unknown labels

    std::vector<std::string> order;
    Systems kept;
    std::size_t dropped_dim = 1;
    for (const auto& s : op.systems())
        if (!drop.count(s.name)) {
            order.push_back(s.name);
            kept.push_back(s);
        }
    for (const auto& s : op.systems())
        if (drop.count(s.name)) {
            order.push_back(s.name);
            dropped_dim *= s.dim;
        }
    const HermitianBlock moved = op.permuted(order);
    return {kept, trace_tail(moved.matrix(), dropped_dim)};
}

HermitianBlock pinch(const HermitianBlock& op, const std::string& system) {
    const std::size_t pos = op.position(system);
    const auto dims = dims_of(op.systems());
    std::size_t stride = 1;
    for (std::size_t k = pos + 1; k < dims.size(); ++k) stride *= dims[k];
    const std::size_t d = dims[pos];
    Matrix out = op.matrix();
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            const std::size_t dr = (static_cast<std::size_t>(r) / stride) % d;
            const std::size_t dc = (static_cast<std::size_t>(c) / stride) % d;
            if (dr != dc) out(r, c) = 0.0;
        }
    return {op.systems(), out};
}

HermitianBlock partial_transpose(const HermitianBlock& op, const std::vector<std::string>& systems) {
    const auto dims = dims_of(op.systems());
    std::vector<bool> flip(dims.size(), false);
    for (const auto& name : systems) flip[op.position(name)] = true;
    std::vector<std::size_t> stride(dims.size(), 1);
    for (std::size_t k = dims.size(); k-- > 1;) stride[k - 1] = stride[k] * dims[k];

    const Matrix& m = op.matrix();
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            std::size_t nr = 0, nc = 0;
            for (std::size_t k = 0; k < dims.size(); ++k) {
                const std::size_t dr = (static_cast<std::size_t>(r) / stride[k]) % dims[k];
                const std::size_t dc = (static_cast<std::size_t>(c) / stride[k]) % dims[k];
                nr += (flip[k] ? dc : dr) * stride[k];
                nc += (flip[k] ? dr : dc) * stride[k];
            }
            out(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc)) = m(r, c);
        }
    return {op.systems(), out};
}

Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

Eigensystem eig_hermitian(const Matrix& m, double tol) {
    if (m.rows() != m.cols()) throw DimensionError("eig_hermitian: matrix is not square");
    if (m.size() > 0 && (m - m.adjoint()).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("eig_hermitian: operator is not hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m));
    return {solver.eigenvalues(), solver.eigenvectors()};
}

Eigensystem eig_hermitian(const HermitianBlock& op, double tol) { return eig_hermitian(op.matrix(), tol); }

Matrix project_psd(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m));
    const RealVector clipped = solver.eigenvalues().cwiseMax(0.0);
    return solver.eigenvectors() * clipped.asDiagonal() * solver.eigenvectors().adjoint();
}

HermitianBlock project_psd(const HermitianBlock& op, double tol) {
    if (!op.is_hermitian(tol)) throw std::invalid_argument("project_psd: operator is not hermitian");
    return {op.systems(), project_psd(op.matrix())};
}

double min_eigenvalue(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

double max_eigenvalue(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(solver.eigenvalues().size() - 1);
}

std::pair<HermitianBlock, StateVector> max_entangled(std::size_t d, const std::string& first,
                                                     const std::string& second) {
    if (d == 0) throw DimensionError("max_entangled: dimension must be positive");
    const auto n = static_cast<Eigen::Index>(d);
    Vector unnormalized = Vector::Zero(n * n);
    for (Eigen::Index m = 0; m < n; ++m) unnormalized(m * n + m) = 1.0;
    Systems systems{{first, d}, {second, d}};
    HermitianBlock omega(systems, unnormalized * unnormalized.adjoint());
    StateVector phi{systems, unnormalized / std::sqrt(static_cast<double>(d))};
    return {omega, phi};
}

}  // namespace qincompat
