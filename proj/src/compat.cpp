#include "qincompat/compat.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "qincompat/json_io.hpp"
#include "seesaw.hpp"

namespace qincompat {

using Eigen::Index;
using detail::kron_plain;

std::string to_string(Notion n) {
    switch (n) {
        case Notion::Classical: return "classical";
        case Notion::Parallel: return "parallel";
        case Notion::Q: return "q";
        case Notion::Exclusivity: return "exclusivity";
    }
    return "?";
}

std::string to_string(VerdictStatus s) {
    switch (s) {
        case VerdictStatus::Compatible: return "Compatible";
        case VerdictStatus::Incompatible: return "Incompatible";
        case VerdictStatus::Undecided: return "Undecided";
    }
    return "?";
}

Notion notion_from_string(const std::string& s) {
    if (s == "classical") return Notion::Classical;
    if (s == "parallel") return Notion::Parallel;
    if (s == "q") return Notion::Q;
    if (s == "exclusive" || s == "exclusivity") return Notion::Exclusivity;
    throw std::invalid_argument("unknown notion '" + s + "'");
}

namespace {

std::string outcome_label(std::size_t w, const std::vector<std::size_t>& shape) {
    if (shape.empty()) return std::to_string(w);
    std::string out;
    std::size_t rest = w, stride = 1;
    for (auto s : shape) stride *= s;
    for (auto s : shape) {
        stride /= s;
        if (!out.empty()) out += ",";
        out += std::to_string(rest / stride);
        rest %= stride;
    }
    return out;
}

Instrument make_instrument(const Systems& in, const Systems& out, std::vector<Matrix> chois,
                           std::vector<std::size_t> shape = {}) {
    Instrument ins;
    ins.input = in;
    ins.output = out;
    ins.chois = std::move(chois);
    if (shape.size() < 2) shape.clear();
    for (std::size_t w = 0; w < ins.chois.size(); ++w) ins.outcomes.push_back(outcome_label(w, shape));
    ins.shape = std::move(shape);
    return ins;
}

void require_common_input(const ProgrammableInstrument& pi) {
    if (pi.size() == 0) throw std::invalid_argument("empty family");
    for (const auto& ins : pi.instruments)
        if (total_dim(ins.input) != total_dim(pi.input()))
            throw DimensionError("programs act on inputs of different dimension");
}

Matrix inverse_sqrt(const Matrix& t) {
    const Eigensystem e = eig_hermitian(Matrix(0.5 * (t + t.adjoint())));
    RealVector s(e.values.size());
    for (Index k = 0; k < s.size(); ++k) s(k) = 1.0 / std::sqrt(std::max(e.values(k), 1e-300));
    return e.vectors * s.asDiagonal() * e.vectors.adjoint();
}

// Splits E = mu D with D : C -> B trace preserving; E must satisfy
// Tr_B E proportional to the identity.
std::pair<double, CpMap> split_post(const Matrix& e, const Systems& c, const Systems& b) {
    const std::size_t dc = total_dim(c), db = total_dim(b);
    const double mu = std::max(0.0, e.trace().real() / static_cast<double>(dc));
    if (mu <= 1e-10) {
        Matrix prep = kron_plain(Matrix::Identity(Index(db), Index(db)) / static_cast<double>(db),
                                 Matrix::Identity(Index(dc), Index(dc)));
        return {0.0, CpMap(c, b, prep)};
    }
    Matrix d = e / mu;
    const Matrix t = trace_head(d, db);
    if (min_eigenvalue(Matrix(0.5 * (t + t.adjoint()))) > 1e-6) {
        const Matrix s = kron_plain(Matrix::Identity(Index(db), Index(db)), inverse_sqrt(t));
        d = s * d * s;
    }
    d = project_psd(Matrix(0.5 * (d + d.adjoint())));
    return {mu, CpMap(c, b, d)};
}

void normalize_columns(StochasticMatrix& mu) {
    for (std::size_t i = 0; i < mu.programs(); ++i)
        for (std::size_t w = 0; w < mu.mother_outcomes(); ++w) {
            double s = 0.0;
            for (std::size_t x = 0; x < mu.outcomes(); ++x) s += mu(x, w, i);
            if (s > 0.0)
                for (std::size_t x = 0; x < mu.outcomes(); ++x) mu(x, w, i) /= s;
            else
                mu(0, w, i) = 1.0;
        }
}

std::vector<std::size_t> digits_of(std::size_t w, const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> d(shape.size());
    for (std::size_t k = shape.size(); k-- > 0;) {
        d[k] = w % shape[k];
        w /= shape[k];
    }
    return d;
}

// E on (B_i, A) embedded as E (x) 1 on (B_0 .. B_{n-1}, A).
Matrix lift(const Matrix& e, std::size_t i, const std::vector<std::size_t>& dims) {
    const std::size_t n = dims.size() - 1;
    std::size_t rest = 1;
    std::vector<std::size_t> old_dims{dims[i], dims[n]};
    for (std::size_t k = 0; k < n; ++k)
        if (k != i) {
            old_dims.push_back(dims[k]);
            rest *= dims[k];
        }
    std::vector<std::size_t> perm(n + 1);
    std::size_t pos = 2;
    for (std::size_t k = 0; k < n; ++k) perm[k] = k == i ? 0 : pos++;
    perm[n] = 1;
    return permute_factors(kron_plain(e, Matrix::Identity(Index(rest), Index(rest))), old_dims, perm);
}

// Joint mother over the product outcome set. Restricting to product outcomes
// and deterministic post-processing loses nothing: a mother H_w with
// mu(x|w,i) can be refined to H'_{x_1..x_n} = sum_w prod_i mu(x_i|w,i) H_w
// (classical case), and likewise for the local post-processings of the
// parallel case, whose marginals are unchanged.
Verdict product_mother(const ProgrammableInstrument& pi, const CompatConfig& cfg, bool parallel) {
    require_common_input(pi);
    Verdict v;
    v.notion = parallel ? Notion::Parallel : Notion::Classical;
    const std::size_t n = pi.size();
    const Systems& a = pi.input();
    const std::size_t da = total_dim(a);
    if (!parallel && !pi.common_output()) {
        v.status = VerdictStatus::Incompatible;
        v.diagnostics = "programs have different output systems; classical compatibility needs a common output";
        return v;
    }
    std::vector<std::size_t> shape;
    std::size_t nw = 1;
    for (const auto& ins : pi.instruments) {
        shape.push_back(ins.size());
        nw *= ins.size();
    }
    if (nw > 4096) throw std::invalid_argument("product outcome set too large (" + std::to_string(nw) + ")");

    Systems out;
    std::vector<std::size_t> dims;
    if (parallel) {
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back({"B" + std::to_string(i), pi.instruments[i].dout()});
            dims.push_back(pi.instruments[i].dout());
        }
        dims.push_back(da);
    } else {
        out = pi.instruments[0].output;
    }
    const std::size_t dout = total_dim(out);

    AffinePsdProblem p;
    std::vector<std::vector<std::size_t>> digits;
    for (std::size_t w = 0; w < nw; ++w) {
        p.add_block("H" + outcome_label(w, shape), dout * da);
        digits.push_back(digits_of(w, shape));
    }
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t x = 0; x < shape[i]; ++x) {
            std::vector<std::size_t> ws;
            for (std::size_t w = 0; w < nw; ++w)
                if (digits[w][i] == x) ws.push_back(w);
            p.add_matrix_equality(
                [&](const Matrix& e) {
                    const Matrix g = parallel ? lift(e, i, dims) : e;
                    std::vector<ConstraintTerm> terms;
                    for (auto w : ws) terms.push_back({w, g});
                    return terms;
                },
                pi.instruments[i].chois[x], static_cast<int>(groups.size()));
            groups.emplace_back(i, x);
        }

    FeasibilityResult r = solve(p, cfg.solver);
    v.iterations = r.iterations;
    v.residual = r.residual;
    std::ostringstream diag;
    diag << r.diagnostics;
    if (r.status == FeasibilityStatus::Feasible) {
        ClassicalCertificate cert{make_instrument(a, out, std::move(r.assignment), shape),
                                  StochasticMatrix(pi.max_outcomes(), nw, n)};
        for (std::size_t w = 0; w < nw; ++w)
            for (std::size_t i = 0; i < n; ++i) cert.mu(digits[w][i], w, i) = 1.0;
        const double err = parallel ? parallel_certificate_error(pi, cert) : certificate_error(pi, cert);
        v.residual = err;
        if (err <= cfg.tol) {
            v.status = VerdictStatus::Compatible;
            v.classical = std::move(cert);
        } else {
            diag << "; certificate reconstruction error " << err << " above tolerance";
        }
    } else if (r.status == FeasibilityStatus::Infeasible) {
        IncompatibilityWitness w{parallel ? "parallel" : "classical", std::move(p), *r.witness, groups, 0.0};
        w.value = witness_value(w.problem, w.witness);
        if (w.verify(cfg.solver.tol, cfg.solver.separation_margin)) {
            v.status = VerdictStatus::Incompatible;
            v.witnesses.push_back(std::move(w));
        } else {
            diag << "; separating functional failed verification";
        }
    }
    v.diagnostics = diag.str();
    return v;
}

detail::SeesawOptions seesaw_options(const CompatConfig& cfg, std::size_t dc, std::size_t nw) {
    detail::SeesawOptions o;
    o.dim_c = cfg.dim_ancilla ? cfg.dim_ancilla : dc;
    o.outcomes = cfg.mother_outcomes ? cfg.mother_outcomes : nw;
    o.restarts = cfg.restarts;
    o.iterations = cfg.seesaw_iterations;
    o.seed = cfg.seed;
    o.solver = cfg.solver;
    return o;
}

// Realizes pi[first] through a mother on C and recovers every program in
// `targets` from the same mother.
std::optional<NoExclusionCertificate> no_exclusion_search(const ProgrammableInstrument& pi, std::size_t first,
                                                          const std::vector<std::size_t>& targets,
                                                          const CompatConfig& cfg, std::string& diag) {
    const Instrument& f = pi.instruments[first];
    const std::size_t da = total_dim(pi.input());
    std::size_t ny = 1;
    std::vector<detail::SeesawTarget> st{{f, true}};
    for (auto t : targets) {
        st.push_back({pi.instruments[t], false});
        ny = std::max(ny, pi.instruments[t].size());
    }
    const auto opt = seesaw_options(cfg, da * f.size(), f.size() * ny);
    auto sol = detail::seesaw_search(pi.input(), st, opt, &diag);
    if (!sol) return std::nullopt;

    const Systems c{{"C", opt.dim_c}};
    const std::size_t nw = opt.outcomes, nx = f.size();
    NoExclusionCertificate cert;
    cert.first = first;
    cert.targets = targets;
    cert.mother = make_instrument(pi.input(), c, sol->mother);
    cert.mu = StochasticMatrix(nx, nw, 1);
    cert.post.resize(nw * nx);
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t x = 0; x < nx; ++x) {
            auto [mu, d] = split_post(sol->post[0][x * nw + w], c, f.output);
            cert.mu(x, w, 0) = mu;
            cert.post[w * nx + x] = std::move(d);
        }
    normalize_columns(cert.mu);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const Instrument& second = pi.instruments[targets[t]];
        std::vector<Instrument> rec;
        for (std::size_t w = 0; w < nw; ++w) {
            std::vector<Matrix> chois;
            for (std::size_t y = 0; y < second.size(); ++y) chois.push_back(sol->post[t + 1][y * nw + w]);
            rec.push_back(make_instrument(c, second.output, std::move(chois)));
        }
        cert.recovery.push_back(std::move(rec));
    }
    return cert;
}

using RealMatrix = Eigen::MatrixXd;

// Matrix of a real-linear map between Hermitian spaces in hermitian_basis
// coordinates.
RealMatrix map_matrix(const std::function<Matrix(const Matrix&)>& f, std::size_t din, std::size_t dout) {
    const auto basis = hermitian_basis(din);
    const BlockLayout out({dout});
    RealMatrix m(Index(out.size()), Index(basis.size()));
    for (std::size_t k = 0; k < basis.size(); ++k) m.col(Index(k)) = out.pack({f(basis[k])});
    return m;
}

Matrix herm(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

Matrix make_tp(Matrix d, std::size_t db) {
    const Matrix t = herm(trace_head(d, db));
    if (min_eigenvalue(t) > 1e-9) {
        const Matrix s = kron_plain(Matrix::Identity(Index(db), Index(db)), inverse_sqrt(t));
        d = s * d * s;
    }
    return project_psd(herm(d));
}

Matrix prepare_mixed(std::size_t dc, std::size_t db) {
    return kron_plain(Matrix::Identity(Index(db), Index(db)) / static_cast<double>(db),
                      Matrix::Identity(Index(dc), Index(dc)));
}

IncompatibilityWitness make_witness(std::string source, AffinePsdProblem p, const Witness& y,
                                    std::vector<std::pair<std::size_t, std::size_t>> groups) {
    IncompatibilityWitness w{std::move(source), std::move(p), y, std::move(groups), 0.0};
    w.value = witness_value(w.problem, w.witness);
    return w;
}

// q-compatibility as a convex problem. With product mother outcomes w and
// deterministic marginals, set G^{(w,i)} = D^{(w_i,w,i)} o H_w. These are
// CP with Tr_B G^{(w,i)} = Tr_C H_w =: E_w for every i and
// sum_{w_i = x} G^{(w,i)} = I^{(i)}_x. Conversely such G factor through the
// Lueders mother sqrt(E_w) . sqrt(E_w) on C = A, so feasibility is exact.
Verdict q_exact(const ProgrammableInstrument& pi, const CompatConfig& cfg) {
    Verdict v;
    v.notion = Notion::Q;
    const Systems& a = pi.input();
    const std::size_t n = pi.size(), da = total_dim(a), nx = pi.max_outcomes();
    std::vector<std::size_t> shape, db;
    std::size_t nw = 1;
    for (const auto& ins : pi.instruments) {
        shape.push_back(ins.size());
        db.push_back(ins.dout());
        nw *= ins.size();
    }
    if (nw > 4096) throw std::invalid_argument("product outcome set too large (" + std::to_string(nw) + ")");
    std::vector<std::vector<std::size_t>> digits;
    AffinePsdProblem p;
    for (std::size_t w = 0; w < nw; ++w) {
        digits.push_back(digits_of(w, shape));
        for (std::size_t i = 0; i < n; ++i)
            p.add_block("G" + outcome_label(w, shape) + "/" + pi.programs[i], db[i] * da);
    }
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t x = 0; x < shape[i]; ++x) {
            p.add_matrix_equality(
                [&](const Matrix& e) {
                    std::vector<ConstraintTerm> terms;
                    for (std::size_t w = 0; w < nw; ++w)
                        if (digits[w][i] == x) terms.push_back({w * n + i, e});
                    return terms;
                },
                pi.instruments[i].chois[x], static_cast<int>(groups.size()));
            groups.emplace_back(i, x);
        }
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t i = 1; i < n; ++i)
            p.add_matrix_equality(
                [&](const Matrix& f) {
                    return std::vector<ConstraintTerm>{
                        {w * n + i, kron_plain(Matrix::Identity(Index(db[i]), Index(db[i])), f)},
                        {w * n, -kron_plain(Matrix::Identity(Index(db[0]), Index(db[0])), f)}};
                },
                Matrix::Zero(Index(da), Index(da)));

    FeasibilityResult r = solve(p, cfg.solver);
    v.iterations = r.iterations;
    v.residual = r.residual;
    v.diagnostics = r.diagnostics;
    if (r.status == FeasibilityStatus::Infeasible) {
        auto w = make_witness("q", std::move(p), *r.witness, groups);
        if (w.verify(cfg.solver.tol, cfg.solver.separation_margin)) {
            v.status = VerdictStatus::Incompatible;
            v.witnesses.push_back(std::move(w));
        } else {
            v.diagnostics += "; separating functional failed verification";
        }
        return v;
    }
    if (r.status != FeasibilityStatus::Feasible) return v;

    QCompatCertificate cert{Instrument{}, StochasticMatrix(nx, nw, n), {}};
    std::vector<Matrix> mother;
    cert.post.resize(n * nw * nx);
    for (std::size_t w = 0; w < nw; ++w) {
        // Tr_B of a Choi operator is the transposed effect.
        const Eigensystem e = eig_hermitian(herm(Matrix(trace_head(r.assignment[w * n], db[0]).transpose())));
        const double cut = 1e-13 * std::max(1.0, e.values.cwiseAbs().maxCoeff());
        RealVector root(e.values.size()), inv(e.values.size()), perp(e.values.size());
        for (Index k = 0; k < e.values.size(); ++k) {
            const double lam = e.values(k);
            root(k) = std::sqrt(std::max(lam, 0.0));
            inv(k) = lam > cut ? 1.0 / std::sqrt(lam) : 0.0;
            perp(k) = lam > cut ? 0.0 : 1.0;
        }
        const Matrix sq = e.vectors * root.asDiagonal() * e.vectors.adjoint();
        const Matrix m = e.vectors * inv.asDiagonal() * e.vectors.adjoint();
        const Matrix pp = e.vectors * perp.asDiagonal() * e.vectors.adjoint();
        mother.push_back(detail::kraus_choi(sq));
        for (std::size_t i = 0; i < n; ++i) {
            const Systems& bi = pi.instruments[i].output;
            cert.mu(digits[w][i], w, i) = 1.0;
            for (std::size_t x = 0; x < nx; ++x) {
                Matrix d = prepare_mixed(da, db[i]);
                if (x == digits[w][i]) {
                    d = detail::compose_choi(r.assignment[w * n + i], detail::kraus_choi(m), da, da, db[i]) +
                        kron_plain(Matrix::Identity(Index(db[i]), Index(db[i])) / static_cast<double>(db[i]),
                                   pp.transpose());
                    d = make_tp(d, db[i]);
                }
                cert.post[(i * nw + w) * nx + x] = CpMap(a, bi, d);
            }
        }
    }
    cert.mother = make_instrument(a, a, std::move(mother), shape);
    v.residual = certificate_error(pi, cert);
    if (v.residual <= cfg.tol) {
        v.status = VerdictStatus::Compatible;
        v.q = std::move(cert);
    } else {
        v.diagnostics += "; certificate reconstruction error above tolerance";
    }
    return v;
}

Verdict q_seesaw(const ProgrammableInstrument& pi, const CompatConfig& cfg) {
    Verdict v;
    v.notion = Notion::Q;
    const Systems& a = pi.input();
    const std::size_t n = pi.size(), nx = pi.max_outcomes();
    std::vector<detail::SeesawTarget> st;
    for (const auto& ins : pi.instruments) st.push_back({ins, true});
    const auto opt = seesaw_options(cfg, total_dim(a) * nx, nx * n);
    std::string diag;
    auto sol = detail::seesaw_search(a, st, opt, &diag);
    if (!sol) {
        v.diagnostics = diag;
        return v;
    }
    const Systems c{{"C", opt.dim_c}};
    QCompatCertificate cert{make_instrument(a, c, sol->mother), StochasticMatrix(nx, opt.outcomes, n), {}};
    cert.post.resize(n * opt.outcomes * nx);
    for (std::size_t i = 0; i < n; ++i) {
        const Instrument& ins = pi.instruments[i];
        const auto dz = Index(opt.dim_c * ins.dout());
        for (std::size_t w = 0; w < opt.outcomes; ++w)
            for (std::size_t x = 0; x < nx; ++x) {
                auto [mu, d] = split_post(x < ins.size() ? sol->post[i][x * opt.outcomes + w] : Matrix::Zero(dz, dz),
                                          c, ins.output);
                cert.mu(x, w, i) = mu;
                cert.post[(i * opt.outcomes + w) * nx + x] = std::move(d);
            }
    }
    normalize_columns(cert.mu);
    v.residual = certificate_error(pi, cert);
    v.iterations = sol->iterations;
    v.diagnostics = "see-saw: " + sol->how;
    if (v.residual <= cfg.tol) {
        v.status = VerdictStatus::Compatible;
        v.q = std::move(cert);
    } else {
        v.diagnostics += "; certificate reconstruction error above tolerance";
    }
    return v;
}

// Stinespring form of an instrument: H_x = V_x . V_x^dag with
// V_x : A -> B (x) E built from the Kraus operators of outcome x, and
// Tr_E recovering the instrument. Any realization (H', D) of the instrument
// factors as H'_x = R o H_x for a channel R, so recovering a second
// instrument from this mother is a linear problem in the recovery maps.
struct Dilation {
    std::size_t env = 1;
    std::size_t dc = 1;
    std::vector<Matrix> mother;
    Matrix trace_env;
};

Dilation dilate(const Instrument& ins) {
    const std::size_t da = ins.din(), db = ins.dout();
    std::vector<std::vector<Matrix>> kraus(ins.size());
    Dilation d;
    for (std::size_t x = 0; x < ins.size(); ++x) {
        const Eigensystem e = eig_hermitian(herm(ins.chois[x]));
        const double cut = 1e-13 * std::max(1.0, e.values.cwiseAbs().maxCoeff());
        for (Index k = 0; k < e.values.size(); ++k) {
            if (e.values(k) <= cut) continue;
            Matrix kx(static_cast<Index>(db), static_cast<Index>(da));
            for (std::size_t b = 0; b < db; ++b)
                for (std::size_t j = 0; j < da; ++j)
                    kx(Index(b), Index(j)) = std::sqrt(e.values(k)) * e.vectors(Index(b * da + j), k);
            kraus[x].push_back(kx);
        }
        d.env = std::max(d.env, kraus[x].size());
    }
    d.dc = db * d.env;
    for (std::size_t x = 0; x < ins.size(); ++x) {
        Matrix v = Matrix::Zero(Index(d.dc), Index(da));
        for (std::size_t k = 0; k < kraus[x].size(); ++k)
            for (std::size_t b = 0; b < db; ++b) v.row(Index(b * d.env + k)) = kraus[x][k].row(Index(b));
        d.mother.push_back(detail::kraus_choi(v));
    }
    d.trace_env = Matrix::Zero(Index(db * d.dc), Index(db * d.dc));
    for (std::size_t k = 0; k < d.env; ++k) {
        Matrix ek = Matrix::Zero(1, Index(d.env));
        ek(0, Index(k)) = 1.0;
        d.trace_env += detail::kraus_choi(kron_plain(Matrix::Identity(Index(db), Index(db)), ek));
    }
    return d;
}

struct PairResult {
    FeasibilityStatus status = FeasibilityStatus::Undecided;
    std::vector<Instrument> recovery;  ///< indexed by the first program's outcome
    std::optional<IncompatibilityWitness> witness;
    std::string diagnostics;
};

// Does pi[first] (through its dilation) leave pi[second] recoverable?
PairResult pair_exact(const ProgrammableInstrument& pi, std::size_t first, std::size_t second, const Dilation& dil,
                      const CompatConfig& cfg) {
    const Instrument& f = pi.instruments[first];
    const Instrument& j = pi.instruments[second];
    const std::size_t da = total_dim(pi.input()), nx = f.size(), ny = j.size(), db = j.dout(), dc = dil.dc;
    AffinePsdProblem p;
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y)
            p.add_block("K" + std::to_string(x) + "/" + j.outcomes[y], db * dc);
    const Matrix ib = Matrix::Identity(Index(db), Index(db));
    for (std::size_t x = 0; x < nx; ++x)
        p.add_matrix_equality(
            [&](const Matrix& g) {
                std::vector<ConstraintTerm> terms;
                for (std::size_t y = 0; y < ny; ++y) terms.push_back({x * ny + y, kron_plain(ib, g)});
                return terms;
            },
            Matrix::Identity(Index(dc), Index(dc)));
    std::vector<RealMatrix> maps;
    for (std::size_t x = 0; x < nx; ++x)
        maps.push_back(map_matrix(
            [&](const Matrix& k) { return detail::compose_choi(k, dil.mother[x], da, dc, db); }, db * dc, db * da));
    const BlockLayout in({db * dc}), out({db * da});
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t y = 0; y < ny; ++y) {
        p.add_matrix_equality(
            [&](const Matrix& e) {
                const RealVector ev = out.pack({e});
                std::vector<ConstraintTerm> terms;
                for (std::size_t x = 0; x < nx; ++x)
                    terms.push_back({x * ny + y, in.unpack_block(maps[x].transpose() * ev, 0)});
                return terms;
            },
            j.chois[y], static_cast<int>(groups.size()));
        groups.emplace_back(second, y);
    }
    FeasibilityResult r = solve(p, cfg.solver);
    PairResult res;
    res.status = r.status;
    res.diagnostics = r.diagnostics;
    const Systems c{{"C", dc}};
    if (r.status == FeasibilityStatus::Feasible) {
        for (std::size_t x = 0; x < nx; ++x) {
            std::vector<Matrix> chois(r.assignment.begin() + long(x * ny), r.assignment.begin() + long((x + 1) * ny));
            Instrument k = make_instrument(c, j.output, std::move(chois));
            k.outcomes = j.outcomes;
            res.recovery.push_back(std::move(k));
        }
    } else if (r.status == FeasibilityStatus::Infeasible) {
        auto w = make_witness("exclusivity", std::move(p), *r.witness, groups);
        if (w.verify(cfg.solver.tol, cfg.solver.separation_margin)) {
            res.witness = std::move(w);
        } else {
            res.status = FeasibilityStatus::Undecided;
            res.diagnostics += "; separating functional failed verification";
        }
    }
    return res;
}

NoExclusionCertificate dilation_certificate(const ProgrammableInstrument& pi, std::size_t first, const Dilation& dil,
                                            const std::vector<std::size_t>& targets,
                                            const std::vector<const PairResult*>& pairs) {
    const Instrument& f = pi.instruments[first];
    const std::size_t nx = f.size();
    const Systems c{{"C", dil.dc}};
    NoExclusionCertificate cert;
    cert.first = first;
    cert.targets = targets;
    cert.mother = make_instrument(pi.input(), c, dil.mother);
    cert.mother.outcomes = f.outcomes;
    cert.mu = StochasticMatrix(nx, nx, 1);
    for (std::size_t x = 0; x < nx; ++x) cert.mu(x, x, 0) = 1.0;
    cert.post.assign(nx * nx, CpMap(c, f.output, dil.trace_env));
    for (const auto* pr : pairs) cert.recovery.push_back(pr->recovery);
    return cert;
}

}  // namespace

Verdict check_povm_classical(const std::vector<Povm>& povms, const CompatConfig& cfg) {
    if (povms.empty()) throw std::invalid_argument("empty POVM family");
    for (const auto& p : povms)
        if (total_dim(p.system) != total_dim(povms[0].system))
            throw DimensionError("POVMs act on systems of different dimension");
    return product_mother(ProgrammableInstrument::from_povms(povms), cfg, false);
}

Verdict check_instrument_classical(const ProgrammableInstrument& pi, const CompatConfig& cfg) {
    return product_mother(pi, cfg, false);
}

Verdict check_parallel(const ProgrammableInstrument& pi, const CompatConfig& cfg) {
    return product_mother(pi, cfg, true);
}

Verdict check_q(const ProgrammableInstrument& pi, const CompatConfig& cfg) {
    require_common_input(pi);
    if (pi.all_channels()) {
        Verdict v;
        v.notion = Notion::Q;
        const Systems& a = pi.input();
        const std::size_t n = pi.size();
        QCompatCertificate cert{make_instrument(a, a, {CpMap::identity(a).choi}), StochasticMatrix(1, 1, n), {}};
        for (std::size_t i = 0; i < n; ++i) {
            cert.mu(0, 0, i) = 1.0;
            cert.post.push_back(pi.instruments[i].map(0));
        }
        v.residual = certificate_error(pi, cert);
        v.status = v.residual <= cfg.tol ? VerdictStatus::Compatible : VerdictStatus::Undecided;
        v.diagnostics = "every program is a channel";
        if (v.status == VerdictStatus::Compatible) v.q = std::move(cert);
        return v;
    }
    Verdict v = q_exact(pi, cfg);
    if (v.status != VerdictStatus::Undecided || !cfg.seesaw_fallback || cfg.restarts == 0) return v;
    Verdict s = q_seesaw(pi, cfg);
    if (s.status == VerdictStatus::Compatible) return s;
    v.diagnostics += "; " + s.diagnostics;
    return v;
}

namespace {

// Fallback for pairs the exact solve left open.
std::optional<NoExclusionCertificate> seesaw_certificate(const ProgrammableInstrument& pi, std::size_t first,
                                                         const std::vector<std::size_t>& targets,
                                                         const CompatConfig& cfg, std::string& diag) {
    if (!cfg.seesaw_fallback || cfg.restarts == 0) return std::nullopt;
    auto cert = no_exclusion_search(pi, first, targets, cfg, diag);
    if (cert && certificate_error(pi, *cert) <= cfg.tol) return cert;
    return std::nullopt;
}

}  // namespace

Verdict excludes(const Instrument& first, const Instrument& second, const CompatConfig& cfg) {
    ProgrammableInstrument pair{{"first", "second"}, {first, second}};
    require_common_input(pair);
    Verdict v;
    v.notion = Notion::Exclusivity;
    const Dilation dil = dilate(first);
    PairResult r = pair_exact(pair, 0, 1, dil, cfg);
    v.diagnostics = r.diagnostics;
    if (r.status == FeasibilityStatus::Feasible) {
        auto cert = dilation_certificate(pair, 0, dil, {1}, {&r});
        v.residual = certificate_error(pair, cert);
        if (v.residual <= cfg.tol) {
            v.status = VerdictStatus::Compatible;
            v.no_exclusion.push_back(std::move(cert));
            return v;
        }
        v.diagnostics += "; certificate reconstruction error above tolerance";
    } else if (r.status == FeasibilityStatus::Infeasible) {
        v.status = VerdictStatus::Incompatible;
        v.witnesses.push_back(std::move(*r.witness));
        return v;
    }
    std::string diag;
    if (auto cert = seesaw_certificate(pair, 0, {1}, cfg, diag)) {
        v.status = VerdictStatus::Compatible;
        v.residual = certificate_error(pair, *cert);
        v.no_exclusion.push_back(std::move(*cert));
    } else if (!diag.empty()) {
        v.diagnostics += "; " + diag;
    }
    return v;
}

Verdict check_exclusive(const ProgrammableInstrument& pi, const CompatConfig& cfg, bool full) {
    require_common_input(pi);
    const std::size_t n = pi.size();
    if (n < 2) throw std::invalid_argument("exclusivity needs at least two programs");
    Verdict v;
    v.notion = Notion::Exclusivity;

    std::vector<Dilation> dil;
    for (const auto& ins : pi.instruments) dil.push_back(dilate(ins));
    // The dilation is a universal mother for its program, so one mother
    // serving all other programs exists iff each pair admits one; both
    // quantifier readings reduce to these pairwise problems.
    std::vector<std::vector<PairResult>> pr(n, std::vector<PairResult>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) pr[i][j] = pair_exact(pi, i, j, dil[i], cfg);

    auto others = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) out.push_back(j);
        return out;
    };
    auto accept = [&](NoExclusionCertificate cert) {
        const double err = certificate_error(pi, cert);
        if (err > cfg.tol) return false;
        v.residual = std::max(v.residual, err);
        v.no_exclusion.push_back(std::move(cert));
        return true;
    };
    auto status = [&](std::size_t i, std::size_t j) { return pr[i][j].status; };

    if (full) {
        bool all_excluded = true;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                if (status(i, j) == FeasibilityStatus::Feasible &&
                    accept(dilation_certificate(pi, i, dil[i], {j}, {&pr[i][j]}))) {
                    v.status = VerdictStatus::Compatible;
                    v.diagnostics = pi.programs[i] + " does not exclude " + pi.programs[j];
                    return v;
                }
                if (status(i, j) != FeasibilityStatus::Infeasible) all_excluded = false;
            }
        if (all_excluded) {
            v.status = VerdictStatus::Incompatible;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (i != j) v.witnesses.push_back(*pr[i][j].witness);
            v.diagnostics = "every program excludes every other";
            return v;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j || status(i, j) != FeasibilityStatus::Undecided) continue;
                std::string d;
                if (auto cert = seesaw_certificate(pi, i, {j}, cfg, d); cert && accept(std::move(*cert))) {
                    v.status = VerdictStatus::Compatible;
                    v.diagnostics = pi.programs[i] + " does not exclude " + pi.programs[j];
                    return v;
                }
            }
        v.diagnostics = "some pairs are undecided";
        return v;
    }

    std::size_t excluded = 0;
    for (std::size_t i0 = 0; i0 < n; ++i0) {
        const auto rest = others(i0);
        std::optional<std::size_t> blocker;
        bool all_feasible = true;
        for (auto j : rest) {
            if (status(i0, j) == FeasibilityStatus::Infeasible) blocker = j;
            if (status(i0, j) != FeasibilityStatus::Feasible) all_feasible = false;
        }
        if (blocker) {
            v.witnesses.push_back(*pr[i0][*blocker].witness);
            ++excluded;
            continue;
        }
        if (!all_feasible) continue;
        bool ok = true;
        if (cfg.per_pair) {
            for (auto j : rest) ok = ok && accept(dilation_certificate(pi, i0, dil[i0], {j}, {&pr[i0][j]}));
        } else {
            std::vector<const PairResult*> pairs;
            for (auto j : rest) pairs.push_back(&pr[i0][j]);
            ok = accept(dilation_certificate(pi, i0, dil[i0], rest, pairs));
        }
        if (ok) {
            v.status = VerdictStatus::Compatible;
            v.witnesses.clear();
            v.diagnostics = pi.programs[i0] + " can run first without excluding the others";
            return v;
        }
        v.no_exclusion.clear();
    }
    if (excluded == n) {
        v.status = VerdictStatus::Incompatible;
        v.diagnostics = "every program excludes some other program";
        return v;
    }
    v.witnesses.clear();
    for (std::size_t i0 = 0; i0 < n; ++i0) {
        bool blocked = false;
        for (auto j : others(i0)) blocked = blocked || status(i0, j) == FeasibilityStatus::Infeasible;
        if (blocked) continue;
        std::string d;
        if (auto cert = seesaw_certificate(pi, i0, others(i0), cfg, d); cert && accept(std::move(*cert))) {
            v.status = VerdictStatus::Compatible;
            v.diagnostics = pi.programs[i0] + " can run first without excluding the others";
            return v;
        }
    }
    v.diagnostics = "no program is certified either way";
    return v;
}

Verdict check(Notion notion, const ProgrammableInstrument& pi, const CompatConfig& cfg) {
    switch (notion) {
        case Notion::Classical: return check_instrument_classical(pi, cfg);
        case Notion::Parallel: return check_parallel(pi, cfg);
        case Notion::Q: return check_q(pi, cfg);
        case Notion::Exclusivity: return check_exclusive(pi, cfg, false);
    }
    throw std::invalid_argument("unknown notion");
}

HierarchyReport hierarchy_report(const ProgrammableInstrument& pi, const CompatConfig& cfg) {
    HierarchyReport r;
    r.povm_family = std::all_of(pi.instruments.begin(), pi.instruments.end(),
                                [](const Instrument& ins) { return ins.dout() == 1; });
    r.classical = check_instrument_classical(pi, cfg);
    r.parallel = check_parallel(pi, cfg);
    r.q = check_q(pi, cfg);
    if (pi.size() >= 2) r.non_exclusive = check_exclusive(pi, cfg, false);
    check_implications(r);
    return r;
}

void check_implications(const HierarchyReport& report) {
    auto is = [](const std::optional<Verdict>& v, VerdictStatus s) { return v && v->status == s; };
    auto implies = [&](const std::optional<Verdict>& a, const std::optional<Verdict>& b, const char* name) {
        if (is(a, VerdictStatus::Compatible) && is(b, VerdictStatus::Incompatible))
            throw ImplicationError(std::string("violated implication: ") + name);
    };
    implies(report.classical, report.q, "classical => q");
    implies(report.parallel, report.q, "parallel => q");
    implies(report.q, report.non_exclusive, "q => non-exclusive");
    implies(report.classical, report.non_exclusive, "classical => non-exclusive");
    implies(report.parallel, report.non_exclusive, "parallel => non-exclusive");
    if (report.povm_family) {
        const std::optional<Verdict>* vs[] = {&report.classical, &report.parallel, &report.q};
        for (auto* a : vs)
            for (auto* b : vs)
                if (is(*a, VerdictStatus::Compatible) && is(*b, VerdictStatus::Incompatible))
                    throw ImplicationError("violated implication: POVM notions coincide (" +
                                           to_string((*a)->notion) + " vs " + to_string((*b)->notion) + ")");
    }
}

std::vector<std::vector<Matrix>> witness_blocks(const IncompatibilityWitness& w, const ProgrammableInstrument& target) {
    std::vector<std::vector<Matrix>> z(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) z[i].resize(target.instruments[i].size());
    const auto& cs = w.problem.constraints;
    for (std::size_t k = 0; k < cs.size() && k < w.witness.multipliers.size(); ++k) {
        if (cs[k].group < 0 || static_cast<std::size_t>(cs[k].group) >= w.groups.size()) continue;
        const auto [i, x] = w.groups[static_cast<std::size_t>(cs[k].group)];
        if (i >= z.size() || x >= z[i].size()) continue;
        Matrix& m = z[i][x];
        if (m.size() == 0) m = Matrix::Zero(cs[k].basis.rows(), cs[k].basis.cols());
        m += w.witness.multipliers[k] * cs[k].basis;
    }
    for (std::size_t i = 0; i < z.size(); ++i)
        for (auto& m : z[i])
            if (m.size() == 0) {
                const auto d = Index(target.instruments[i].din() * target.instruments[i].dout());
                m = Matrix::Zero(d, d);
            }
    return z;
}

namespace {

nlohmann::json map_json(const CpMap& m) {
    return {{"input", systems_to_json(m.input)}, {"output", systems_to_json(m.output)}, {"choi", matrix_to_json(m.choi)}};
}

}  // namespace

nlohmann::json to_json(const Verdict& v) {
    nlohmann::json j{{"notion", to_string(v.notion)},
                     {"status", to_string(v.status)},
                     {"residual", v.residual},
                     {"iterations", v.iterations},
                     {"diagnostics", v.diagnostics}};
    if (v.classical) j["certificate"] = {{"kind", "classical"}, {"mother", to_json(v.classical->mother)}, {"mu", to_json(v.classical->mu)}};
    if (v.q) {
        nlohmann::json post = nlohmann::json::array();
        for (const auto& d : v.q->post) post.push_back(map_json(d));
        j["certificate"] = {{"kind", "q"}, {"mother", to_json(v.q->mother)}, {"mu", to_json(v.q->mu)}, {"post", post}};
    }
    if (!v.no_exclusion.empty()) {
        nlohmann::json certs = nlohmann::json::array();
        for (const auto& c : v.no_exclusion) {
            nlohmann::json post = nlohmann::json::array(), rec = nlohmann::json::array();
            for (const auto& d : c.post) post.push_back(map_json(d));
            for (const auto& per_target : c.recovery) {
                nlohmann::json r = nlohmann::json::array();
                for (const auto& k : per_target) r.push_back(to_json(k));
                rec.push_back(r);
            }
            certs.push_back({{"first", c.first}, {"targets", c.targets}, {"mother", to_json(c.mother)},
                             {"mu", to_json(c.mu)}, {"post", post}, {"recovery", rec}});
        }
        j["certificate"] = {{"kind", "no-exclusion"}, {"realizations", certs}};
    }
    if (!v.witnesses.empty()) {
        nlohmann::json ws = nlohmann::json::array();
        for (const auto& w : v.witnesses)
            ws.push_back({{"source", w.source},
                          {"value", w.value},
                          {"multipliers", w.witness.multipliers},
                          {"groups", w.groups},
                          {"problem", to_json(w.problem)}});
        j["witness"] = ws;
    }
    return j;
}

}  // namespace qincompat
