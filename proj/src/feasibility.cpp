#include "qincompat/feasibility.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "qincompat/json_io.hpp"

namespace qincompat {

namespace {

using Eigen::Index;
using RealMatrix = Eigen::MatrixXd;

constexpr double kSqrt2 = 1.4142135623730951;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Pseudo-inverse pieces of the Gram matrix A A^T.
struct GramPinv {
    RealMatrix range;   // eigenvectors with non-negligible eigenvalues
    RealMatrix nullsp;  // the rest
    RealMatrix pinv;    // (A A^T)^+
};

GramPinv gram_pinv(const RealMatrix& a) {
    GramPinv g;
    const Index m = a.rows();
    if (m == 0) return g;
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(a * a.transpose());
    const RealVector& lam = es.eigenvalues();
    const double cut = 1e-11 * std::max(1.0, lam.maxCoeff());
    std::vector<Index> keep, drop;
    for (Index k = 0; k < m; ++k) (lam(k) > cut ? keep : drop).push_back(k);
    g.range.resize(m, idx(keep.size()));
    g.nullsp.resize(m, idx(drop.size()));
    RealVector inv(idx(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        g.range.col(idx(k)) = es.eigenvectors().col(keep[k]);
        inv(idx(k)) = 1.0 / lam(keep[k]);
    }
    for (std::size_t k = 0; k < drop.size(); ++k) g.nullsp.col(idx(k)) = es.eigenvectors().col(drop[k]);
    g.pinv = g.range * inv.asDiagonal() * g.range.transpose();
    return g;
}

double max_abs(const RealVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

// ---------------------------------------------------------------- problem

std::size_t AffinePsdProblem::add_block(std::string name, std::size_t dim) {
    if (dim == 0) throw DimensionError("block '" + name + "' has dimension 0");
    block_names.push_back(std::move(name));
    block_dims.push_back(dim);
    return block_dims.size() - 1;
}

void AffinePsdProblem::add_constraint(Constraint c) { constraints.push_back(std::move(c)); }

void AffinePsdProblem::add_matrix_equality(
    const std::function<std::vector<ConstraintTerm>(const Matrix&)>& adjoint, const Matrix& target, int group) {
    if (target.rows() != target.cols()) throw DimensionError("matrix equality target must be square");
    for (const Matrix& e : hermitian_basis(static_cast<std::size_t>(target.rows()))) {
        Constraint c;
        c.terms = adjoint(e);
        c.rhs = (e * target).trace().real();
        c.group = group;
        c.basis = e;
        constraints.push_back(std::move(c));
    }
}

void AffinePsdProblem::check() const {
    if (block_names.size() != block_dims.size()) throw DimensionError("block names and dimensions disagree");
    for (std::size_t k = 0; k < constraints.size(); ++k)
        for (const auto& t : constraints[k].terms) {
            if (t.block >= block_dims.size())
                throw DimensionError("constraint " + std::to_string(k) + " refers to a missing block");
            const auto d = idx(block_dims[t.block]);
            if (t.op.rows() != d || t.op.cols() != d)
                throw DimensionError("constraint " + std::to_string(k) + " has a mis-sized operator");
            if ((t.op - t.op.adjoint()).norm() > 1e-10 * std::max(1.0, t.op.norm()))
                throw std::invalid_argument("constraint " + std::to_string(k) + " operator is not hermitian");
        }
}

std::vector<Matrix> hermitian_basis(std::size_t d) {
    const Index n = idx(d);
    std::vector<Matrix> basis;
    basis.reserve(d * d);
    for (Index i = 0; i < n; ++i) {
        Matrix e = Matrix::Zero(n, n);
        e(i, i) = 1.0;
        basis.push_back(std::move(e));
    }
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            Matrix re = Matrix::Zero(n, n), im = Matrix::Zero(n, n);
            re(i, j) = re(j, i) = 1.0 / kSqrt2;
            im(i, j) = cplx(0.0, 1.0 / kSqrt2);
            im(j, i) = cplx(0.0, -1.0 / kSqrt2);
            basis.push_back(std::move(re));
            basis.push_back(std::move(im));
        }
    return basis;
}

// ----------------------------------------------------------------- layout

BlockLayout::BlockLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    for (std::size_t d : dims_) {
        offsets_.push_back(total_);
        total_ += d * d;
    }
}

void BlockLayout::pack_block(const Matrix& m, std::size_t b, RealVector& out) const {
    const Index n = idx(dims_[b]);
    Index o = idx(offsets_[b]);
    for (Index i = 0; i < n; ++i) out(o++) = m(i, i).real();
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            out(o++) = kSqrt2 * m(i, j).real();
            out(o++) = kSqrt2 * m(i, j).imag();
        }
}

Matrix BlockLayout::unpack_block(const RealVector& v, std::size_t b) const {
    const Index n = idx(dims_[b]);
    Index o = idx(offsets_[b]);
    Matrix m(n, n);
    for (Index i = 0; i < n; ++i) m(i, i) = v(o++);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            const cplx z(v(o) / kSqrt2, v(o + 1) / kSqrt2);
            o += 2;
            m(i, j) = z;
            m(j, i) = std::conj(z);
        }
    return m;
}

RealVector BlockLayout::pack(const std::vector<Matrix>& xs) const {
    if (xs.size() != dims_.size()) throw DimensionError("block count mismatch");
    RealVector v(idx(total_));
    for (std::size_t b = 0; b < xs.size(); ++b) {
        if (xs[b].rows() != idx(dims_[b])) throw DimensionError("block dimension mismatch");
        pack_block(xs[b], b, v);
    }
    return v;
}

std::vector<Matrix> BlockLayout::unpack(const RealVector& v) const {
    std::vector<Matrix> xs;
    xs.reserve(dims_.size());
    for (std::size_t b = 0; b < dims_.size(); ++b) xs.push_back(unpack_block(v, b));
    return xs;
}

RealVector BlockLayout::project_psd(const RealVector& v) const {
    RealVector out(v.size());
    for (std::size_t b = 0; b < dims_.size(); ++b) pack_block(qincompat::project_psd(unpack_block(v, b)), b, out);
    return out;
}

double BlockLayout::min_eigenvalue(const RealVector& v) const {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < dims_.size(); ++b) lo = std::min(lo, qincompat::min_eigenvalue(unpack_block(v, b)));
    return lo;
}

RealMatrix constraint_matrix(const AffinePsdProblem& problem, const BlockLayout& layout) {
    RealMatrix a = RealMatrix::Zero(idx(problem.constraints.size()), idx(layout.size()));
    RealVector row(idx(layout.size()));
    for (std::size_t k = 0; k < problem.constraints.size(); ++k) {
        for (const auto& t : problem.constraints[k].terms) {
            row.setZero();
            layout.pack_block(t.op, t.block, row);
            const Index o = idx(layout.offset(t.block));
            const Index len = idx(layout.dim(t.block) * layout.dim(t.block));
            a.row(idx(k)).segment(o, len) += row.segment(o, len).transpose();
        }
    }
    return a;
}

RealVector constraint_rhs(const AffinePsdProblem& problem) {
    RealVector b(idx(problem.constraints.size()));
    for (std::size_t k = 0; k < problem.constraints.size(); ++k) b(idx(k)) = problem.constraints[k].rhs;
    return b;
}

// --------------------------------------------------------------- witnesses

std::vector<Matrix> witness_operator(const AffinePsdProblem& problem, const Witness& w) {
    if (w.multipliers.size() != problem.constraints.size())
        throw DimensionError("witness has " + std::to_string(w.multipliers.size()) + " multipliers for " +
                             std::to_string(problem.constraints.size()) + " constraints");
    std::vector<Matrix> s;
    for (std::size_t d : problem.block_dims) s.push_back(Matrix::Zero(idx(d), idx(d)));
    for (std::size_t k = 0; k < problem.constraints.size(); ++k)
        for (const auto& t : problem.constraints[k].terms) s[t.block] += w.multipliers[k] * t.op;
    return s;
}

double witness_value(const AffinePsdProblem& problem, const Witness& w) {
    double v = 0.0;
    for (std::size_t k = 0; k < problem.constraints.size(); ++k) v += w.multipliers[k] * problem.constraints[k].rhs;
    return v;
}

bool verify_witness(const AffinePsdProblem& problem, const Witness& w, double tol, double margin) {
    if (w.multipliers.size() != problem.constraints.size()) return false;
    for (double y : w.multipliers)
        if (!std::isfinite(y)) return false;
    for (const Matrix& s : witness_operator(problem, w)) {
        const Matrix h = 0.5 * (s + s.adjoint());
        if (max_eigenvalue(h) > tol) return false;
    }
    return witness_value(problem, w) >= margin;
}

double assignment_violation(const AffinePsdProblem& problem, const std::vector<Matrix>& xs) {
    if (xs.size() != problem.size()) throw DimensionError("assignment has the wrong number of blocks");
    double worst = 0.0;
    for (const auto& c : problem.constraints) {
        double lhs = 0.0;
        for (const auto& t : c.terms) lhs += (t.op * xs[t.block]).trace().real();
        worst = std::max(worst, std::abs(lhs - c.rhs));
    }
    for (const Matrix& x : xs) worst = std::max(worst, -min_eigenvalue(Matrix(0.5 * (x + x.adjoint()))));
    return worst;
}

std::string to_string(FeasibilityStatus s) {
    switch (s) {
        case FeasibilityStatus::Feasible: return "feasible";
        case FeasibilityStatus::Infeasible: return "infeasible";
        case FeasibilityStatus::Undecided: return "undecided";
    }
    return "undecided";
}

// ------------------------------------------------------------------ solver

namespace {

class Dykstra {
  public:
    Dykstra(const AffinePsdProblem& p, const SolverConfig& cfg)
        : p_(p), cfg_(cfg), layout_(p.block_dims), a_(constraint_matrix(p, layout_)), b_(constraint_rhs(p)),
          g_(gram_pinv(a_)) {
        if (a_.rows() > 0) dual_c_ = -(a_.transpose() * (g_.pinv * b_));
    }

    FeasibilityResult run();

  private:
    RealVector project_affine(const RealVector& x) const {
        if (a_.rows() == 0) return x;
        return x - a_.transpose() * (g_.pinv * (a_ * x - b_));
    }
    // Multipliers y minimizing |A^T y - d|.
    RealVector multipliers_for(const RealVector& d) const { return g_.pinv * (a_ * d); }

    std::optional<Witness> inconsistency_witness() const;
    std::optional<Witness> gap_witness(const RealVector& x_aff, const RealVector& x_psd) const;
    std::optional<Witness> repair_witness(RealVector y) const;
    // Affine slice of the witness cone: {-A^T y : b^T y = 1}.
    RealVector project_dual_affine(const RealVector& z) const {
        const RealVector zr = a_.transpose() * (g_.pinv * (a_ * z));
        return zr + (1.0 - dual_c_.dot(zr)) / dual_c_.squaredNorm() * dual_c_;
    }
    std::optional<std::vector<Matrix>> accept(const RealVector& x) const;
    std::optional<std::vector<Matrix>> polish(const RealVector& x_psd) const;
    std::optional<Witness> finalize(RealVector y) const;

    const AffinePsdProblem& p_;
    SolverConfig cfg_;
    BlockLayout layout_;
    RealMatrix a_;
    RealVector b_;
    GramPinv g_;
    RealVector dual_c_;
};

std::optional<Witness> Dykstra::finalize(RealVector y) const {
    if (!y.allFinite() || y.norm() == 0.0) return std::nullopt;
    const RealVector s = a_.transpose() * y;
    const double sn = s.norm();
    y /= sn > 1e-12 * y.norm() ? sn : std::abs(b_.dot(y));
    Witness w{std::vector<double>(y.data(), y.data() + y.size())};
    if (verify_witness(p_, w, cfg_.tol, cfg_.separation_margin)) return w;
    return std::nullopt;
}

std::optional<Witness> Dykstra::inconsistency_witness() const {
    if (g_.nullsp.cols() == 0) return std::nullopt;
    const RealVector r = g_.nullsp * (g_.nullsp.transpose() * b_);
    if (r.norm() <= cfg_.tol) return std::nullopt;
    return finalize(r / b_.dot(r));
}

std::optional<Witness> Dykstra::gap_witness(const RealVector& x_aff, const RealVector& x_psd) const {
    const RealVector d = x_aff - x_psd;
    if (d.norm() == 0.0) return std::nullopt;
    return repair_witness(multipliers_for(d));
}

std::optional<Witness> Dykstra::repair_witness(RealVector y) const {
    // Shift by the identity functional when it is representable; this makes
    // every block exactly negative semidefinite at the cost of a little value.
    std::vector<Matrix> ids;
    for (std::size_t dim : p_.block_dims) ids.push_back(Matrix::Identity(idx(dim), idx(dim)));
    const RealVector id = layout_.pack(ids);
    const RealVector y_id = multipliers_for(id);
    const bool id_representable = (a_.transpose() * y_id - id).norm() <= 1e-9 * id.norm();

    for (int round = 0; round < 30; ++round) {
        const RealVector s = a_.transpose() * y;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < layout_.blocks(); ++b)
            top = std::max(top, max_eigenvalue(layout_.unpack_block(s, b)));
        if (top <= 0.0) break;
        if (id_representable) {
            y -= (top * (1.0 + 1e-9) + 1e-15 * s.norm()) * y_id;
            break;
        }
        // Remove the positive part in the least-squares sense.
        const RealVector pos = layout_.project_psd(s);
        if (pos.norm() <= 1e-14 * s.norm()) break;
        y -= 1.01 * multipliers_for(pos);
    }
    return finalize(y);
}

std::optional<std::vector<Matrix>> Dykstra::accept(const RealVector& x) const {
    std::vector<Matrix> xs = layout_.unpack(x);
    const double v = assignment_violation(p_, xs);
    if (v > cfg_.tol) return std::nullopt;
    // Tighten to machine precision when the face projection keeps positivity.
    if (auto tight = polish(layout_.project_psd(x)); tight && assignment_violation(p_, *tight) < v) {
        if (assignment_violation(p_, *tight) <= 1e-12) return tight;
        xs = std::move(*tight);
    }
    // Alternating projections from here converge to a point of the
    // intersection; a few thousand cheap steps usually reach round-off.
    std::vector<Matrix> best = xs;
    double best_v = assignment_violation(p_, xs);
    RealVector z = layout_.pack(xs);
    for (int it = 1; it <= 20000 && best_v > 1e-12; ++it) {
        const RealVector y = layout_.project_psd(z);
        z = project_affine(y);
        if (it % 25 == 0) {
            for (const RealVector* cand : std::array<const RealVector*, 2>{&y, &z}) {
                std::vector<Matrix> c = layout_.unpack(*cand);
                const double cv = assignment_violation(p_, c);
                if (cv < best_v) {
                    best_v = cv;
                    best = std::move(c);
                }
            }
        }
    }
    return best;
}

// Restrict to the face spanned by the numerically nonzero eigenvectors of the
// PSD iterate and solve the affine constraints there with a least-norm
// correction. Degenerate feasible sets (no interior point) make Dykstra crawl;
// this converges in one step once the face is identified.
std::optional<std::vector<Matrix>> Dykstra::polish(const RealVector& x_psd) const {
    std::vector<Eigensystem> eig;
    double scale = 0.0;
    for (std::size_t b = 0; b < layout_.blocks(); ++b) {
        eig.push_back(eig_hermitian(layout_.unpack_block(x_psd, b)));
        scale = std::max(scale, eig.back().values.cwiseAbs().maxCoeff());
    }
    if (scale == 0.0) scale = 1.0;
    std::optional<std::vector<Matrix>> best;
    double best_v = cfg_.tol;
    for (double rel : {1e-9, 1e-7, 1e-5, 1e-3, 0.0}) {
        std::vector<Matrix> bases;
        std::vector<std::size_t> ranks;
        for (const auto& e : eig) {
            std::vector<Index> cols;
            for (Index k = 0; k < e.values.size(); ++k)
                if (rel == 0.0 || e.values(k) > rel * scale) cols.push_back(k);
            if (cols.empty()) cols.push_back(e.values.size() - 1);
            Matrix v(e.vectors.rows(), idx(cols.size()));
            for (std::size_t c = 0; c < cols.size(); ++c) v.col(idx(c)) = e.vectors.col(cols[c]);
            bases.push_back(std::move(v));
            ranks.push_back(cols.size());
        }
        AffinePsdProblem reduced;
        for (std::size_t b = 0; b < ranks.size(); ++b) reduced.add_block(p_.block_names[b], ranks[b]);
        for (const auto& c : p_.constraints) {
            Constraint rc;
            rc.rhs = c.rhs;
            for (const auto& t : c.terms) rc.terms.push_back({t.block, bases[t.block].adjoint() * t.op * bases[t.block]});
            reduced.constraints.push_back(std::move(rc));
        }
        const BlockLayout rl(ranks);
        const RealMatrix ra = constraint_matrix(reduced, rl);
        std::vector<Matrix> start;
        for (std::size_t b = 0; b < ranks.size(); ++b)
            start.push_back(bases[b].adjoint() * layout_.unpack_block(x_psd, b) * bases[b]);
        RealVector y = rl.pack(start);
        if (ra.rows() > 0) {
            Eigen::CompleteOrthogonalDecomposition<RealMatrix> cod(ra);
            y += cod.solve(b_ - ra * y);
        }
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<Matrix> xs;
            for (std::size_t b = 0; b < ranks.size(); ++b) {
                Matrix yb = rl.unpack_block(y, b);
                if (pass == 1) yb = qincompat::project_psd(yb);
                xs.push_back(bases[b] * yb * bases[b].adjoint());
            }
            const double v = assignment_violation(p_, xs);
            if (v <= best_v) {
                best_v = v;
                best = std::move(xs);
            }
        }
        if (best && best_v <= 1e-12 * std::max(1.0, scale)) break;
    }
    return best;
}

FeasibilityResult Dykstra::run() {
    FeasibilityResult res;
    auto decide_infeasible = [&](Witness w, std::string why) {
        res.status = FeasibilityStatus::Infeasible;
        res.witness = std::move(w);
        res.diagnostics = std::move(why);
        return res;
    };
    auto decide_feasible = [&](std::vector<Matrix> xs, std::string why) {
        res.status = FeasibilityStatus::Feasible;
        res.assignment = std::move(xs);
        res.diagnostics = std::move(why);
        return res;
    };

    if (auto w = inconsistency_witness()) return decide_infeasible(*w, "affine constraints are inconsistent");

    RealVector start = RealVector::Zero(idx(layout_.size()));
    if (cfg_.seed != 0) {
        std::mt19937_64 rng(cfg_.seed);
        std::normal_distribution<double> n01;
        for (Index k = 0; k < start.size(); ++k) start(k) = 1e-3 * n01(rng);
    }
    RealVector x = project_affine(start);
    RealVector y = x;
    RealVector p = RealVector::Zero(x.size());
    double last_gap = std::numeric_limits<double>::infinity();
    std::size_t next_polish = cfg_.check_every;
    // Interleaved search for a separating functional: alternating
    // projections between the PSD cone and the normalized witness slice.
    const bool dual = dual_c_.size() > 0 && dual_c_.squaredNorm() > 1e-24;
    RealVector zx, zy, zp;
    if (dual) {
        zx = project_dual_affine(RealVector::Zero(x.size()));
        zy = zx;
        zp = RealVector::Zero(x.size());
    }

    for (std::size_t it = 1; it <= cfg_.max_iter; ++it) {
        y = layout_.project_psd(x + p);
        p = x + p - y;
        x = project_affine(y);
        if (dual) {
            zy = layout_.project_psd(zx + zp);
            zp = zx + zp - zy;
            zx = project_dual_affine(zy);
        }
        res.iterations = it;
        if (it % cfg_.check_every != 0 && it != cfg_.max_iter) continue;
        if (dual && (zx - zy).norm() <= 1e-3 * std::max(1.0, zy.norm()))
            if (auto w = repair_witness(-(g_.pinv * (a_ * zy))))
                return decide_infeasible(*w, "separating functional from the witness cone");

        const double gap = (x - y).norm();
        res.residual = gap;
        if (max_abs(a_ * y - b_) <= cfg_.tol)
            if (auto xs = accept(y)) return decide_feasible(std::move(*xs), "converged");
        if (layout_.min_eigenvalue(x) >= -cfg_.tol)
            if (auto xs = accept(x)) return decide_feasible(std::move(*xs), "converged");

        const bool stalled = last_gap - gap <= 1e-3 * gap;
        last_gap = gap;
        const bool periodic = it % (10 * cfg_.check_every) == 0;
        if ((stalled || periodic) && gap > cfg_.tol)
            if (auto w = gap_witness(x, y)) return decide_infeasible(*w, "separating functional from the gap vector");
        if (it >= next_polish && gap < 1e-2) {
            next_polish = 2 * it;
            if (auto xs = polish(y)) return decide_feasible(std::move(*xs), "facial polish");
        }
    }
    if (auto xs = polish(y)) return decide_feasible(std::move(*xs), "facial polish");
    if (auto w = gap_witness(x, y)) return decide_infeasible(*w, "separating functional from the gap vector");
    std::ostringstream os;
    os << "iteration budget exhausted; gap " << res.residual;
    res.diagnostics = os.str();
    return res;
}

}  // namespace

FeasibilityResult solve(const AffinePsdProblem& problem, const SolverConfig& cfg) {
    problem.check();
    if (cfg.check_every == 0) throw std::invalid_argument("check_every must be positive");
    return Dykstra(problem, cfg).run();
}

// -------------------------------------------------------------------- QP

QpSolver::QpSolver(const AffinePsdProblem& constraints) : layout_(constraints.block_dims) {
    constraints.check();
    const RealMatrix a = constraint_matrix(constraints, layout_);
    const RealVector b = constraint_rhs(constraints);
    const Index n = idx(layout_.size());
    if (a.rows() == 0) {
        null_ = RealMatrix::Identity(n, n);
        particular_ = RealVector::Zero(n);
        return;
    }
    const GramPinv g = gram_pinv(a);
    particular_ = a.transpose() * (g.pinv * b);
    consistent_ = (a * particular_ - b).norm() <= 1e-9 * std::max(1.0, b.norm());
    Eigen::ColPivHouseholderQR<RealMatrix> qr(a.transpose());
    qr.setThreshold(1e-11);
    const Index rank = qr.rank();
    const RealMatrix q = qr.householderQ();
    null_ = q.rightCols(n - rank);
}

QpResult QpSolver::solve(const RealMatrix& q, const RealVector& c, const QpConfig& cfg,
                         const std::vector<Matrix>* warm) const {
    const Index n = idx(layout_.size());
    if (c.size() != n) throw DimensionError("objective vector has the wrong size");
    const bool quad = q.size() != 0;
    if (quad && (q.rows() != n || q.cols() != n)) throw DimensionError("objective matrix has the wrong size");
    const Index k = null_.cols();
    RealMatrix reduced = cfg.rho * RealMatrix::Identity(k, k);
    RealVector qxp = RealVector::Zero(n);
    if (quad) {
        reduced += null_.transpose() * q * null_;
        qxp = q * particular_;
    }
    return admm(reduced, c, qxp, cfg, warm,
                [&](const RealVector& z) { return -c.dot(z) + (quad ? 0.5 * z.dot(q * z) : 0.0); });
}

QpResult QpSolver::least_squares(const RealMatrix& f_mat, const RealVector& f, const QpConfig& cfg,
                                 const std::vector<Matrix>* warm) const {
    const Index n = idx(layout_.size());
    if (f_mat.cols() != n || f_mat.rows() != f.size()) throw DimensionError("least squares data has the wrong size");
    const RealMatrix fn = f_mat * null_;
    RealMatrix reduced = fn.transpose() * fn;
    reduced.diagonal().array() += cfg.rho;
    const RealVector c = f_mat.transpose() * f;
    const RealVector qxp = f_mat.transpose() * (f_mat * particular_);
    return admm(reduced, c, qxp, cfg, warm, [&](const RealVector& z) { return 0.5 * (f_mat * z - f).squaredNorm(); });
}

QpResult QpSolver::admm(const RealMatrix& reduced, const RealVector& c, const RealVector& qxp, const QpConfig& cfg,
                        const std::vector<Matrix>* warm,
                        const std::function<double(const RealVector&)>& objective) const {
    const Index n = idx(layout_.size());
    Eigen::LLT<RealMatrix> llt(reduced);
    RealVector z = warm ? layout_.pack(*warm) : RealVector(layout_.project_psd(particular_));
    RealVector u = RealVector::Zero(n);
    RealVector x = particular_;
    const RealVector lin = null_.transpose() * (c - qxp);
    QpResult res;
    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
        x = particular_ + null_ * llt.solve(lin + cfg.rho * (null_.transpose() * (z - u)));
        const RealVector z_old = z;
        z = layout_.project_psd(x + u);
        u += x - z;
        res.iterations = it;
        const double primal = (x - z).norm(), dual = cfg.rho * (z - z_old).norm();
        const double scale = std::max({1.0, x.norm(), z.norm()});
        if (primal <= cfg.tol * scale && dual <= cfg.tol * scale) {
            res.converged = true;
            break;
        }
    }
    res.x = layout_.unpack(z);
    res.objective = objective(z);
    const RealVector in_null = null_ * (null_.transpose() * (z - particular_));
    res.affine_residual = (z - particular_ - in_null).norm();
    return res;
}

// ------------------------------------------------------------------- JSON

nlohmann::json to_json(const AffinePsdProblem& problem) {
    json blocks = json::array();
    for (std::size_t b = 0; b < problem.size(); ++b)
        blocks.push_back({{"name", problem.block_names[b]}, {"dim", problem.block_dims[b]}});
    json cons = json::array();
    for (const auto& c : problem.constraints) {
        json terms = json::array();
        for (const auto& t : c.terms) terms.push_back({{"block", t.block}, {"op", matrix_to_json(t.op)}});
        json jc = {{"terms", terms}, {"rhs", c.rhs}, {"group", c.group}};
        if (c.basis.size() != 0) jc["basis"] = matrix_to_json(c.basis);
        cons.push_back(std::move(jc));
    }
    return {{"blocks", blocks}, {"constraints", cons}};
}

AffinePsdProblem problem_from_json(const nlohmann::json& j) {
    try {
        AffinePsdProblem p;
        for (const auto& b : j.at("blocks")) p.add_block(b.at("name").get<std::string>(), b.at("dim").get<std::size_t>());
        for (const auto& jc : j.at("constraints")) {
            Constraint c;
            c.rhs = jc.at("rhs").get<double>();
            c.group = jc.value("group", -1);
            if (jc.contains("basis")) c.basis = matrix_from_json(jc.at("basis"));
            for (const auto& t : jc.at("terms"))
                c.terms.push_back({t.at("block").get<std::size_t>(), matrix_from_json(t.at("op"))});
            p.constraints.push_back(std::move(c));
        }
        p.check();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("feasibility problem: ") + e.what());
    }
}

nlohmann::json to_json(const FeasibilityResult& r) {
    json j = {{"status", to_string(r.status)},
              {"residual", r.residual},
              {"iterations", r.iterations},
              {"diagnostics", r.diagnostics}};
    if (r.witness) j["witness"] = r.witness->multipliers;
    if (!r.assignment.empty()) {
        json xs = json::array();
        for (const auto& x : r.assignment) xs.push_back(matrix_to_json(x));
        j["assignment"] = xs;
    }
    return j;
}

}  // namespace qincompat
