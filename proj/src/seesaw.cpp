#include "seesaw.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "qincompat/random.hpp"

namespace qincompat::detail {

namespace {

using Eigen::Index;
using RealMatrix = Eigen::MatrixXd;

Index idx(std::size_t i) { return static_cast<Index>(i); }

Matrix inverse_sqrt(const Matrix& t) {
    const Eigensystem e = eig_hermitian(Matrix(0.5 * (t + t.adjoint())));
    RealVector s(e.values.size());
    for (Index k = 0; k < s.size(); ++k) s(k) = 1.0 / std::sqrt(e.values(k));
    return e.vectors * s.asDiagonal() * e.vectors.adjoint();
}

// Appends one equality per row of F x = f, with F in `layout` coordinates.
void add_rows(AffinePsdProblem& p, const BlockLayout& layout, const RealMatrix& f_mat, const RealVector& f) {
    for (Index j = 0; j < f_mat.rows(); ++j) {
        const RealVector row = f_mat.row(j).transpose();
        Constraint c;
        c.rhs = f(j);
        for (std::size_t b = 0; b < layout.blocks(); ++b) {
            const Index o = idx(layout.offset(b)), len = idx(layout.dim(b) * layout.dim(b));
            if (row.segment(o, len).cwiseAbs().maxCoeff() == 0.0) continue;
            c.terms.push_back({b, layout.unpack_block(row, b)});
        }
        if (!c.terms.empty() || std::abs(c.rhs) > 0.0) p.add_constraint(std::move(c));
    }
}

struct Target {
    std::size_t nx = 0, db = 0;
    bool proportional = true;
    BlockLayout out;     // nx blocks on B (x) A
    RealVector f;        // packed target
    AffinePsdProblem cons;
    BlockLayout vars;    // nx * |W| blocks on B (x) C
    std::unique_ptr<QpSolver> qp;
};

class Engine {
  public:
    Engine(const Systems& input, const std::vector<SeesawTarget>& targets, const SeesawOptions& opt)
        : da_(total_dim(input)), dc_(opt.dim_c), nw_(opt.outcomes), opt_(opt), input_(input) {
        for (const auto& st : targets) {
            Target t;
            t.nx = st.instrument.size();
            t.db = st.instrument.dout();
            t.proportional = st.proportional;
            t.out = BlockLayout(std::vector<std::size_t>(t.nx, t.db * da_));
            t.f = t.out.pack(st.instrument.chois);
            for (std::size_t x = 0; x < t.nx; ++x)
                for (std::size_t w = 0; w < nw_; ++w)
                    t.cons.add_block("E" + std::to_string(x) + "," + std::to_string(w), t.db * dc_);
            const Matrix ib = Matrix::Identity(idx(t.db), idx(t.db));
            const Matrix ic = Matrix::Identity(idx(dc_), idx(dc_));
            for (std::size_t w = 0; w < nw_; ++w)
                t.cons.add_matrix_equality(
                    [&](const Matrix& e) {
                        std::vector<ConstraintTerm> terms;
                        for (std::size_t x = 0; x < t.nx; ++x) terms.push_back({x * nw_ + w, kron_plain(ib, e)});
                        return terms;
                    },
                    ic);
            if (t.proportional)
                for (std::size_t x = 0; x < t.nx; ++x)
                    for (std::size_t w = 0; w < nw_; ++w)
                        t.cons.add_matrix_equality(
                            [&](const Matrix& e) {
                                Matrix g = kron_plain(ib, e);
                                g -= e.trace() / static_cast<double>(dc_) *
                                     Matrix::Identity(idx(t.db * dc_), idx(t.db * dc_));
                                return std::vector<ConstraintTerm>{{x * nw_ + w, g}};
                            },
                            Matrix::Zero(idx(dc_), idx(dc_)));
            t.vars = BlockLayout(t.cons.block_dims);
            t.qp = std::make_unique<QpSolver>(t.cons);
            targets_.push_back(std::move(t));
        }
        for (std::size_t w = 0; w < nw_; ++w) hcons_.add_block("H" + std::to_string(w), dc_ * da_);
        const Matrix icm = Matrix::Identity(idx(dc_), idx(dc_));
        hcons_.add_matrix_equality(
            [&](const Matrix& e) {
                std::vector<ConstraintTerm> terms;
                for (std::size_t w = 0; w < nw_; ++w) terms.push_back({w, kron_plain(icm, e)});
                return terms;
            },
            Matrix::Identity(idx(da_), idx(da_)));
        hvars_ = BlockLayout(hcons_.block_dims);
        hqp_ = std::make_unique<QpSolver>(hcons_);
        for (const auto& t : targets_) {
            f_all_.conservativeResize(f_all_.size() + t.f.size());
            f_all_.tail(t.f.size()) = t.f;
        }
        basis_h_ = hermitian_basis(dc_ * da_);
    }

    std::optional<SeesawSolution> run(std::string* diag);

  private:
    RealMatrix e_map(const Target& t, const std::vector<Matrix>& h) const;
    RealMatrix h_map(const std::vector<std::vector<Matrix>>& e) const;
    std::optional<std::vector<Matrix>> exact_post(const Target& t, const std::vector<Matrix>& h) const;
    std::optional<SeesawSolution> try_mother(const std::vector<Matrix>& h, const std::string& how) const;
    bool repair(std::vector<Matrix>& h) const;
    std::vector<std::vector<Matrix>> seeds() const;

    std::size_t da_, dc_, nw_;
    SeesawOptions opt_;
    Systems input_;
    std::vector<Target> targets_;
    AffinePsdProblem hcons_;
    BlockLayout hvars_;
    std::unique_ptr<QpSolver> hqp_;
    RealVector f_all_;
    std::vector<Matrix> basis_h_;
};

RealMatrix Engine::e_map(const Target& t, const std::vector<Matrix>& h) const {
    RealMatrix f = RealMatrix::Zero(idx(t.out.size()), idx(t.vars.size()));
    const std::vector<Matrix> basis = hermitian_basis(t.db * dc_);
    RealVector col = RealVector::Zero(idx(t.out.size()));
    for (std::size_t w = 0; w < nw_; ++w) {
        if (h[w].norm() == 0.0) continue;
        const Matrix lh = choi_to_liouville(h[w], da_, dc_);
        for (std::size_t k = 0; k < basis.size(); ++k) {
            const Matrix m = liouville_to_choi(choi_to_liouville(basis[k], dc_, t.db) * lh, da_, t.db);
            for (std::size_t x = 0; x < t.nx; ++x) {
                t.out.pack_block(m, x, col);
                const Index o = idx(t.out.offset(x)), len = idx(t.out.dim(x) * t.out.dim(x));
                f.block(o, idx(t.vars.offset(x * nw_ + w) + k), len, 1) = col.segment(o, len);
            }
        }
    }
    return f;
}

RealMatrix Engine::h_map(const std::vector<std::vector<Matrix>>& e) const {
    RealMatrix f = RealMatrix::Zero(f_all_.size(), idx(hvars_.size()));
    Index row0 = 0;
    for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
        const Target& t = targets_[ti];
        RealVector col = RealVector::Zero(idx(t.out.size()));
        for (std::size_t x = 0; x < t.nx; ++x)
            for (std::size_t w = 0; w < nw_; ++w) {
                const Matrix le = choi_to_liouville(e[ti][x * nw_ + w], dc_, t.db);
                for (std::size_t k = 0; k < basis_h_.size(); ++k) {
                    const Matrix m = liouville_to_choi(le * choi_to_liouville(basis_h_[k], da_, dc_), da_, t.db);
                    t.out.pack_block(m, x, col);
                    const Index o = idx(t.out.offset(x)), len = idx(t.out.dim(x) * t.out.dim(x));
                    f.block(row0 + o, idx(hvars_.offset(w) + k), len, 1) += col.segment(o, len);
                }
            }
        row0 += idx(t.out.size());
    }
    return f;
}

std::optional<std::vector<Matrix>> Engine::exact_post(const Target& t, const std::vector<Matrix>& h) const {
    AffinePsdProblem p = t.cons;
    add_rows(p, t.vars, e_map(t, h), t.f);
    FeasibilityResult r = solve(p, opt_.solver);
    if (r.status != FeasibilityStatus::Feasible) return std::nullopt;
    return r.assignment;
}

std::optional<SeesawSolution> Engine::try_mother(const std::vector<Matrix>& h, const std::string& how) const {
    SeesawSolution s;
    s.mother = h;
    for (const auto& t : targets_) {
        auto e = exact_post(t, h);
        if (!e) return std::nullopt;
        s.post.push_back(std::move(*e));
    }
    s.how = how;
    const RealMatrix fh = h_map(s.post);
    s.objective = (fh * hvars_.pack(h) - f_all_).squaredNorm();
    return s;
}

bool Engine::repair(std::vector<Matrix>& h) const {
    Matrix t = Matrix::Zero(idx(da_), idx(da_));
    for (auto& hw : h) {
        hw = project_psd(Matrix(0.5 * (hw + hw.adjoint())));
        t += trace_head(hw, dc_);
    }
    if (min_eigenvalue(Matrix(0.5 * (t + t.adjoint()))) < 1e-9) return false;
    const Matrix s = kron_plain(Matrix::Identity(idx(dc_), idx(dc_)), inverse_sqrt(t));
    for (auto& hw : h) hw = s * hw * s;
    return true;
}

std::vector<std::vector<Matrix>> Engine::seeds() const {
    std::vector<std::vector<Matrix>> out;
    const Matrix zero = Matrix::Zero(idx(dc_ * da_), idx(dc_ * da_));
    if (dc_ >= da_) {
        std::vector<Matrix> h(nw_, zero);
        h[0] = kraus_choi(Matrix::Identity(idx(dc_), idx(da_)));
        out.push_back(std::move(h));
    }
    // Measure one target first and keep its quantum output.
    for (const auto& t : targets_) {
        if (t.db > dc_ || t.nx > nw_) continue;
        const Matrix v = kraus_choi(Matrix::Identity(idx(dc_), idx(t.db)));
        std::vector<Matrix> h(nw_, zero);
        for (std::size_t x = 0; x < t.nx; ++x) h[x] = compose_choi(v, t.out.unpack_block(t.f, x), da_, t.db, dc_);
        out.push_back(std::move(h));
    }
    return out;
}

std::optional<SeesawSolution> Engine::run(std::string* diag) {
    std::ostringstream log;
    std::size_t seed_no = 0;
    for (const auto& h : seeds()) {
        if (auto s = try_mother(h, "constructive seed " + std::to_string(seed_no))) return s;
        ++seed_no;
    }
    QpConfig inner;
    inner.max_iter = 60;
    inner.tol = 1e-10;
    double best = std::numeric_limits<double>::infinity();
    std::size_t total = 0;
    for (std::size_t r = 0; r < opt_.restarts; ++r) {
        Rng rng(opt_.seed * 1000003ULL + r + 1);
        std::vector<Matrix> h =
            random_instrument(input_, {{"C", dc_}}, nw_, std::min<std::size_t>(2, dc_ * da_), rng).chois;
        std::vector<std::vector<Matrix>> e(targets_.size());
        double prev = std::numeric_limits<double>::infinity(), obj = prev;
        std::size_t stall = 0;
        for (std::size_t it = 0; it < opt_.iterations; ++it, ++total) {
            for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
                const Target& t = targets_[ti];
                const auto res = t.qp->least_squares(e_map(t, h), t.f, inner, e[ti].empty() ? nullptr : &e[ti]);
                e[ti] = res.x;
            }
            const RealMatrix fh = h_map(e);
            h = hqp_->least_squares(fh, f_all_, inner, &h).x;
            if (!repair(h)) break;
            obj = (fh * hvars_.pack(h) - f_all_).squaredNorm();
            if (obj < 1e-10) break;
            stall = prev - obj < 1e-4 * prev ? stall + 1 : 0;
            if (stall >= 10) break;
            prev = obj;
        }
        best = std::min(best, obj);
        if (obj < 1e-5)
            if (auto s = try_mother(h, "restart " + std::to_string(r))) {
                s->iterations = total;
                return s;
            }
    }
    log << "no certificate after " << opt_.restarts << " restarts; best objective " << best;
    if (diag) *diag = log.str();
    return std::nullopt;
}

}  // namespace

Matrix kron_plain(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Choi operator of rho -> K rho K^dag.
Matrix kraus_choi(const Matrix& k) {
    const Index din = k.cols();
    Matrix v = Matrix::Zero(k.rows() * din, 1);
    // sum_m (K|m>) (x) |m>
    for (Index m = 0; m < din; ++m)
        for (Index b = 0; b < k.rows(); ++b) v(b * din + m, 0) = k(b, m);
    return v * v.adjoint();
}

Matrix compose_choi(const Matrix& e, const Matrix& h, std::size_t da, std::size_t dc, std::size_t db) {
    return liouville_to_choi(choi_to_liouville(e, dc, db) * choi_to_liouville(h, da, dc), da, db);
}

std::optional<SeesawSolution> seesaw_search(const Systems& input, const std::vector<SeesawTarget>& targets,
                                            const SeesawOptions& opt, std::string* diagnostics) {
    if (opt.dim_c == 0 || opt.outcomes == 0) throw std::invalid_argument("see-saw needs positive ancilla and outcome counts");
    Engine engine(input, targets, opt);
    return engine.run(diagnostics);
}

}  // namespace qincompat::detail
