#include "qincompat/games.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "qincompat/fixtures.hpp"
#include "qincompat/json_io.hpp"
#include "seesaw.hpp"

namespace qincompat {

using detail::compose_choi;
using detail::kraus_choi;
using detail::kron_plain;

namespace {

using Eigen::Index;
using RealMatrix = Eigen::MatrixXd;

Index ix(std::size_t n) { return static_cast<Index>(n); }
Matrix eye(std::size_t d) { return Matrix::Identity(ix(d), ix(d)); }
Matrix zeros(std::size_t d) { return Matrix::Zero(ix(d), ix(d)); }
Matrix herm(const Matrix& m) { return 0.5 * (m + m.adjoint()); }
// sum_ab a_ab b_ab: Tr(C_K^T C_J) for Choi or Liouville matrices alike.
double pair_sum(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum().real(); }
// <H, X> for a Hermitian X.
double inner(const Matrix& h, const Matrix& x) { return pair_sum(h.conjugate(), x); }

Instrument mk(const Systems& in, const Systems& out, std::vector<Matrix> chois) {
    Instrument ins;
    ins.input = in;
    ins.output = out;
    for (std::size_t x = 0; x < chois.size(); ++x) ins.outcomes.push_back(std::to_string(x));
    ins.chois = std::move(chois);
    return ins;
}

Systems memory_system(const Systems& s, std::size_t dim) {
    std::string name = "M";
    while (std::any_of(s.begin(), s.end(), [&](const SystemLabel& l) { return l.name == name; })) name += "'";
    return concat(s, {{name, dim}});
}

Systems strip_memory(const Systems& s) { return Systems(s.begin(), s.end() - 1); }

const Systems kTrivialIn{{"A0", 1}};
const Systems kTrivialOut{{"B0", 1}};

// Choi operator of f (x) g, factors ordered (out_f out_g) (x) (in_f in_g).
Matrix tensor_choi(const Matrix& f, std::size_t fin, std::size_t fout, const Matrix& g, std::size_t gin,
                   std::size_t gout) {
    return permute_factors(kron_plain(f, g), {fout, fin, gout, gin}, {0, 2, 1, 3});
}

Matrix with_identity(const Matrix& f, std::size_t fin, std::size_t fout, std::size_t m) {
    return tensor_choi(f, fin, fout, kraus_choi(eye(m)), m, m);
}

Matrix mixed_prepare_choi(std::size_t din, std::size_t dout) {
    return kron_plain(eye(dout) / static_cast<double>(dout), eye(din));
}

Instrument dummy_instrument(const Systems& in, const Systems& out, std::size_t n) {
    std::vector<Matrix> c(n, zeros(total_dim(in) * total_dim(out)));
    c[0] = mixed_prepare_choi(total_dim(in), total_dim(out));
    return mk(in, out, std::move(c));
}

Matrix inverse_sqrt(const Matrix& t) {
    const Eigensystem e = eig_hermitian(herm(t));
    RealVector v(e.values.size());
    for (Index k = 0; k < v.size(); ++k) v(k) = 1.0 / std::sqrt(std::max(e.values(k), 1e-300));
    return e.vectors * v.asDiagonal() * e.vectors.adjoint();
}

// PSD projection followed by an exact trace-preservation repair.
std::vector<Matrix> repair_instrument(std::vector<Matrix> xs, std::size_t din, std::size_t dout) {
    Matrix t = zeros(din);
    for (auto& x : xs) {
        x = project_psd(herm(x));
        t += trace_head(x, dout);
    }
    if (min_eigenvalue(herm(t)) < 1e-12) {
        const double delta = 1e-12 + std::max(0.0, -min_eigenvalue(herm(t)));
        xs[0] += delta * eye(dout * din) / static_cast<double>(dout);
        t += delta * eye(din);
    }
    const Matrix s = kron_plain(eye(dout), inverse_sqrt(t));
    for (auto& x : xs) x = herm(s * x * s);
    return xs;
}

struct Luders {
    Matrix root, inv, perp;
};

Luders luders(const Matrix& effect) {
    const Eigensystem e = eig_hermitian(herm(effect));
    const double cut = 1e-12 * std::max(1.0, e.values.cwiseAbs().maxCoeff());
    RealVector r(e.values.size()), in(e.values.size()), p(e.values.size());
    for (Index k = 0; k < r.size(); ++k) {
        const double lam = e.values(k);
        r(k) = std::sqrt(std::max(lam, 0.0));
        in(k) = lam > cut ? 1.0 / std::sqrt(lam) : 0.0;
        p(k) = lam > cut ? 0.0 : 1.0;
    }
    const Matrix& v = e.vectors;
    return {v * r.asDiagonal() * v.adjoint(), v * in.asDiagonal() * v.adjoint(), v * p.asDiagonal() * v.adjoint()};
}

// Instrument R with R_z o Ad(sqrt E) = S_z, given sum_z Tr_D S_z = E^T; the
// kernel of E is sent to outcome 0.
std::vector<Matrix> factor_through(const std::vector<Matrix>& s, const Luders& l, std::size_t dc, std::size_t dd) {
    std::vector<Matrix> out;
    for (const auto& sz : s) out.push_back(compose_choi(sz, kraus_choi(l.inv), dc, dc, dd));
    out[0] += kron_plain(eye(dd) / static_cast<double>(dd), Matrix(l.perp.transpose()));
    return repair_instrument(std::move(out), dc, dd);
}

// Effects E_w normalized to sum exactly to the identity.
std::vector<Matrix> normalize_effects(std::vector<Matrix> e) {
    Matrix t = zeros(static_cast<std::size_t>(e[0].rows()));
    for (auto& m : e) {
        m = project_psd(herm(m));
        t += m;
    }
    const Matrix s = inverse_sqrt(t);
    for (auto& m : e) m = herm(s * m * s);
    return e;
}

std::vector<std::size_t> digits(std::size_t w, std::size_t base, std::size_t n) {
    std::vector<std::size_t> d(n);
    for (std::size_t k = n; k-- > 0;) {
        d[k] = w % base;
        w /= base;
    }
    return d;
}

// Maximization of a linear functional over instruments din -> dout.
class InstrumentSet {
  public:
    InstrumentSet(std::size_t din, std::size_t dout, std::size_t n)
        : din_(din), dout_(dout), n_(n), solver_(problem(din, dout, n)) {}

    std::vector<Matrix> maximize(const std::vector<Matrix>& h, const std::vector<Matrix>& warm,
                                 std::size_t iters) const {
        RealVector c = solver_.layout().pack(h);
        const double norm = c.norm();
        if (norm == 0.0) return warm;
        QpConfig cfg;
        cfg.max_iter = iters;
        cfg.tol = 1e-10;
        const QpResult r = solver_.solve(RealMatrix(), c / norm, cfg, &warm);
        return repair_instrument(r.x, din_, dout_);
    }

    std::size_t outcomes() const { return n_; }

  private:
    static AffinePsdProblem problem(std::size_t din, std::size_t dout, std::size_t n) {
        AffinePsdProblem p;
        for (std::size_t z = 0; z < n; ++z) p.add_block("X" + std::to_string(z), din * dout);
        p.add_matrix_equality(
            [&](const Matrix& f) {
                std::vector<ConstraintTerm> t;
                for (std::size_t z = 0; z < n; ++z) t.push_back({z, kron_plain(eye(dout), f)});
                return t;
            },
            eye(din));
        return p;
    }

    std::size_t din_, dout_, n_;
    QpSolver solver_;
};

// Linear program over PSD blocks with a linear objective; returns the raw
// (approximately feasible) blocks.
std::vector<Matrix> maximize_linear(const AffinePsdProblem& p, const std::vector<Matrix>& h, std::size_t iters) {
    QpSolver solver(p);
    RealVector c = solver.layout().pack(h);
    const double norm = c.norm();
    QpConfig cfg;
    cfg.max_iter = iters;
    cfg.tol = 1e-11;
    return solver.solve(RealMatrix(), norm > 0.0 ? RealVector(c / norm) : c, cfg).x;
}

ProgrammableInstrument family_of(std::vector<Instrument> ins) {
    ProgrammableInstrument pi;
    for (std::size_t j = 0; j < ins.size(); ++j) pi.programs.push_back(std::to_string(j));
    pi.instruments = std::move(ins);
    return pi;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ProtocolError(message);
}

}  // namespace

// ------------------------------------------------------------------- basics

std::string to_string(Framework f) {
    switch (f) {
    case Framework::C: return "c";
    case Framework::Q: return "q";
    case Framework::Ex: return "ex";
    }
    return "?";
}

Framework framework_from_string(const std::string& s) {
    if (s == "c" || s == "classical") return Framework::C;
    if (s == "q") return Framework::Q;
    if (s == "ex" || s == "exclusivity") return Framework::Ex;
    throw std::invalid_argument("unknown framework '" + s + "' (expected c, q or ex)");
}

Notion free_notion(Framework f) {
    switch (f) {
    case Framework::C: return Notion::Classical;
    case Framework::Q: return Notion::Q;
    case Framework::Ex: return Notion::Exclusivity;
    }
    return Notion::Classical;
}

bool Conditional::is_valid(double tol) const {
    if (p.size() != conditions * outputs) return false;
    for (std::size_t c = 0; c < conditions; ++c) {
        double s = 0.0;
        for (std::size_t o = 0; o < outputs; ++o) {
            if ((*this)(c, o) < -tol) return false;
            s += (*this)(c, o);
        }
        if (std::abs(s - 1.0) > tol) return false;
    }
    return true;
}

void FreeProtocol::check(double tol) const {
    const std::size_t w = pre.size();
    require(w > 0, "pre-processing instrument has no outcomes");
    require(programs > 0 && outcomes > 0 && resource_programs > 0 && resource_outcomes > 0 && registers > 0 &&
                messages > 0 && memory > 0,
            "protocol sizes must be positive");
    if (auto v = validate(pre, tol); !v) throw ProtocolError("pre-processing: " + v.violation);
    require(!pre.output.empty() && pre.output.back().dim == memory, "pre-processing output must end with the memory");
    require(framework != Framework::C || messages == 1, "framework c has no backward message");
    require(choose.conditions == programs * w && choose.outputs == resource_programs * registers,
            "program choice has the wrong shape");
    require(respond.conditions == programs * w * resource_programs * registers * resource_outcomes &&
                respond.outputs == outcomes * messages,
            "response has the wrong shape");
    require(choose.is_valid(tol), "program choice is not a conditional distribution");
    require(respond.is_valid(tol), "response is not a conditional distribution");
    require(post.size() == w * messages * slots(), "wrong number of post-processings");
    const std::size_t nz = framework == Framework::Ex ? outcomes : 1;
    for (const auto& e : post) {
        if (auto v = validate(e, tol); !v) throw ProtocolError("post-processing: " + v.violation);
        require(e.size() == nz, framework == Framework::Ex ? "post-processing instruments need one outcome per output"
                                                            : "post-processings must be channels");
        require(e.din() == post[0].din() && e.dout() == post[0].dout(), "post-processings disagree on dimensions");
        require(!e.input.empty() && e.input.back().dim == memory, "post-processing input must end with the memory");
    }
    require(designated < programs && resource_designated < resource_programs, "designated program out of range");
}

// -------------------------------------------------------------- evaluation

namespace {

// Liouville matrices of the pieces of a protocol acting on a fixed resource.
struct Wiring {
    Framework fw = Framework::C;
    std::size_t nj = 0, ny = 0, ni = 0, nx = 0, nw = 0, nk = 0, ns = 0, nz = 0;
    std::size_t dc = 0, dd = 0, da = 0, db = 0, dm = 0;
    std::size_t istar = 0, jstar = 0;
    std::vector<Matrix> lr;  ///< (I_x (x) id_M), index i * |X| + x

    bool sees(std::size_t i) const { return fw != Framework::Ex || i == istar; }
    std::size_t xhat(std::size_t i, std::size_t x) const { return sees(i) ? x : 0; }
    std::size_t slot(std::size_t i, std::size_t x) const { return sees(i) ? 0 : 1 + x; }

    void lift_resource(const ProgrammableInstrument& pi) {
        lr.clear();
        for (std::size_t i = 0; i < ni; ++i)
            for (std::size_t x = 0; x < nx; ++x) {
                const Matrix c = x < pi.instruments[i].size() ? pi.instruments[i].chois[x] : zeros(da * db);
                lr.push_back(choi_to_liouville(with_identity(c, da, db, dm), da * dm, db * dm));
            }
    }
};

void check_resource(const FreeProtocol& t, const ProgrammableInstrument& pi) {
    require(pi.size() == t.resource_programs, "resource has " + std::to_string(pi.size()) +
                                                  " programs, the protocol expects " +
                                                  std::to_string(t.resource_programs));
    require(pi.max_outcomes() <= t.resource_outcomes, "resource has more outcomes than the protocol handles");
    require(pi.common_output(), "resource programs need a common output dimension");
    const std::size_t da = total_dim(pi.input()), db = pi.instruments[0].dout();
    if (t.pre.dout() != da * t.memory) throw DimensionError("pre-processing output does not match the resource input");
    if (t.post[0].din() != db * t.memory) throw DimensionError("post-processing input does not match the resource output");
}

Wiring wiring_of(const FreeProtocol& t, const ProgrammableInstrument& pi) {
    Wiring g;
    g.fw = t.framework;
    g.nj = t.programs;
    g.ny = t.outcomes;
    g.ni = t.resource_programs;
    g.nx = t.resource_outcomes;
    g.nw = t.forward();
    g.nk = t.messages;
    g.ns = t.slots();
    g.nz = t.post[0].size();
    g.dc = t.pre.din();
    g.dd = t.post[0].dout();
    g.da = total_dim(pi.input());
    g.db = pi.instruments[0].dout();
    g.dm = t.memory;
    g.istar = t.resource_designated;
    g.jstar = t.designated;
    g.lift_resource(pi);
    return g;
}

}  // namespace

ProgrammableInstrument apply_protocol(const FreeProtocol& t, const ProgrammableInstrument& pi) {
    t.check();
    check_resource(t, pi);
    const Wiring g = wiring_of(t, pi);
    std::vector<Matrix> q;  // (w, i, x)
    for (std::size_t w = 0; w < g.nw; ++w) {
        const Matrix lp = choi_to_liouville(t.pre.chois[w], g.dc, g.da * g.dm);
        for (std::size_t k = 0; k < g.ni * g.nx; ++k) q.push_back(g.lr[k] * lp);
    }
    std::vector<std::vector<Matrix>> le(t.post.size());
    for (std::size_t p = 0; p < t.post.size(); ++p)
        for (const auto& c : t.post[p].chois) le[p].push_back(choi_to_liouville(c, g.db * g.dm, g.dd));

    std::vector<Matrix> acc(g.nj * g.ny, Matrix::Zero(ix(g.dd * g.dd), ix(g.dc * g.dc)));
    for (std::size_t j = 0; j < g.nj; ++j)
        for (std::size_t w = 0; w < g.nw; ++w)
            for (std::size_t i = 0; i < g.ni; ++i)
                for (std::size_t r = 0; r < t.registers; ++r) {
                    const double pc = t.choose(j * g.nw + w, i * t.registers + r);
                    if (pc == 0.0) continue;
                    for (std::size_t x = 0; x < g.nx; ++x) {
                        const Matrix& qq = q[(w * g.ni + i) * g.nx + x];
                        const std::size_t row = (((j * g.nw + w) * g.ni + i) * t.registers + r) * g.nx + g.xhat(i, x);
                        const std::size_t s = g.slot(i, x);
                        for (std::size_t y = 0; y < g.ny; ++y)
                            for (std::size_t k = 0; k < g.nk; ++k) {
                                const double pr = pc * t.respond(row, y * g.nk + k);
                                if (pr == 0.0) continue;
                                const auto& e = le[(w * g.nk + k) * g.ns + s];
                                if (g.fw != Framework::Ex) {
                                    acc[j * g.ny + y] += pr * (e[0] * qq);
                                } else if (j == g.jstar) {
                                    for (const auto& ez : e) acc[j * g.ny + y] += pr * (ez * qq);
                                } else {
                                    for (std::size_t z = 0; z < g.ny; ++z) acc[j * g.ny + z] += pr * (e[z] * qq);
                                }
                            }
                    }
                }
    std::vector<Instrument> out;
    for (std::size_t j = 0; j < g.nj; ++j) {
        std::vector<Matrix> c;
        for (std::size_t y = 0; y < g.ny; ++y) c.push_back(herm(liouville_to_choi(acc[j * g.ny + y], g.dc, g.dd)));
        out.push_back(mk(t.pre.input, t.post[0].output, std::move(c)));
    }
    return family_of(std::move(out));
}

double score(const ProgrammableInstrument& family, const GuessingGame& game) {
    const auto& ref = game.referee;
    if (family.size() != ref.size()) throw DimensionError("family and referee have different program counts");
    double total = 0.0;
    std::size_t dc = 0, dd = 0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
        const Instrument& k = ref.instruments[j];
        const Instrument& f = family.instruments[j];
        if (k.din() != f.din() || k.dout() != f.dout()) throw DimensionError("family and referee systems differ");
        dc = k.din();
        dd = k.dout();
        for (std::size_t y = 0; y < std::min(k.size(), f.size()); ++y) total += pair_sum(k.chois[y], f.chois[y]);
    }
    return total / static_cast<double>(ref.size() * dc * dd);
}

double evaluate(const FreeProtocol& t, const ProgrammableInstrument& pi, const GuessingGame& game) {
    return score(apply_protocol(t, pi), game);
}

// ------------------------------------------------------------ see-saw ascent

namespace {

void require_game(const GuessingGame& game) {
    require(game.referee.size() > 0, "referee has no programs");
    require(game.referee.common_output(), "referee programs need a common output dimension");
    if (auto v = validate(game.referee, 1e-7); !v) throw ProtocolError("referee: " + v.violation);
}

// Block-coordinate ascent over (pre, classical strategy, post) for a fixed
// resource and game. Classical strategies are kept deterministic: given the
// quantum parts the optimum over them is attained at a vertex.
class Ascent {
  public:
    Ascent(Wiring g, const GuessingGame& game, std::size_t qp_iters)
        : g_(std::move(g)), qp_iters_(qp_iters), pre_set_(g_.dc, g_.da * g_.dm, g_.nw),
          post_set_(g_.db * g_.dm, g_.dd, g_.nz) {
        norm_ = 1.0 / static_cast<double>(g_.nj * g_.dc * g_.dd);
        for (std::size_t j = 0; j < g_.nj; ++j)
            for (std::size_t y = 0; y < g_.ny; ++y) {
                const Instrument& k = game.referee.instruments[j];
                lk_.push_back(choi_to_liouville(y < k.size() ? k.chois[y] : zeros(g_.dc * g_.dd), g_.dc, g_.dd));
            }
    }

    Wiring& wiring() { return g_; }

    void seed_random(Rng& rng, const Systems& c_sys, const Systems& pre_out, const Systems& post_in,
                     const Systems& d_sys) {
        pre_ = random_instrument(c_sys, pre_out, g_.nw, 2, rng).chois;
        post_.clear();
        for (std::size_t p = 0; p < g_.nw * g_.nk * g_.ns; ++p)
            post_.push_back(random_instrument(post_in, d_sys, g_.nz, 2, rng).chois);
        std::uniform_int_distribution<std::size_t> pick_i(0, g_.ni - 1), pick_yk(0, g_.ny * g_.nk - 1);
        ich_.assign(g_.nj * g_.nw, 0);
        for (auto& v : ich_) v = pick_i(rng);
        resp_.assign(g_.nj * g_.nw * g_.ni * g_.nx, 0);
        for (auto& v : resp_) v = pick_yk(rng);
        refresh();
    }

    bool seed_identity() {
        if (g_.dc != g_.da || g_.db != g_.dd) return false;
        Matrix kr = Matrix::Zero(ix(g_.da * g_.dm), ix(g_.dc));
        for (std::size_t a = 0; a < g_.da; ++a) kr(ix(a * g_.dm), ix(a)) = 1.0;
        pre_.assign(g_.nw, zeros(g_.dc * g_.da * g_.dm));
        pre_[0] = kraus_choi(kr);
        Matrix trace_m = zeros(g_.dd * g_.db * g_.dm);
        for (std::size_t m = 0; m < g_.dm; ++m) {
            Matrix km = Matrix::Zero(ix(g_.db), ix(g_.db * g_.dm));
            for (std::size_t b = 0; b < g_.db; ++b) km(ix(b), ix(b * g_.dm + m)) = 1.0;
            trace_m += kraus_choi(km);
        }
        post_.clear();
        for (std::size_t w = 0; w < g_.nw; ++w)
            for (std::size_t k = 0; k < g_.nk; ++k)
                for (std::size_t s = 0; s < g_.ns; ++s) {
                    std::vector<Matrix> e(g_.nz, zeros(g_.dd * g_.db * g_.dm));
                    const std::size_t z = g_.nz == 1 ? 0 : std::min(s == 0 ? k : s - 1, g_.nz - 1);
                    e[z] = trace_m;
                    post_.push_back(std::move(e));
                }
        ich_.assign(g_.nj * g_.nw, 0);
        for (std::size_t j = 0; j < g_.nj; ++j) ich_[j * g_.nw] = j % g_.ni;
        resp_.assign(g_.nj * g_.nw * g_.ni * g_.nx, 0);
        for (std::size_t c = 0; c < resp_.size(); ++c) {
            const std::size_t x = c % g_.nx;
            const std::size_t y = std::min(x, g_.ny - 1);
            const std::size_t k = g_.fw == Framework::Ex ? std::min(x, g_.nk - 1) : 0;
            resp_[c] = y * g_.nk + k;
        }
        refresh();
        return true;
    }

    double run(std::size_t iterations, std::size_t& used) {
        double value = classical_step();
        for (std::size_t it = 0; it < iterations; ++it, ++used) {
            pre_step();
            classical_step();
            post_step();
            const double next = classical_step();
            const bool stalled = next - value <= 1e-10 * std::max(1.0, std::abs(value));
            value = std::max(value, next);
            if (stalled) break;
        }
        return value;
    }

    FreeProtocol protocol(const Systems& c_sys, const Systems& pre_out, const Systems& post_in,
                          const Systems& d_sys) const {
        FreeProtocol t;
        t.framework = g_.fw;
        t.programs = g_.nj;
        t.outcomes = g_.ny;
        t.resource_programs = g_.ni;
        t.resource_outcomes = g_.nx;
        t.messages = g_.nk;
        t.memory = g_.dm;
        t.designated = g_.jstar;
        t.resource_designated = g_.istar;
        t.pre = mk(c_sys, pre_out, pre_);
        t.choose = Conditional(g_.nj * g_.nw, g_.ni);
        for (std::size_t c = 0; c < ich_.size(); ++c) t.choose(c, ich_[c]) = 1.0;
        t.respond = Conditional(g_.nj * g_.nw * g_.ni * g_.nx, g_.ny * g_.nk);
        for (std::size_t j = 0; j < g_.nj; ++j)
            for (std::size_t w = 0; w < g_.nw; ++w)
                for (std::size_t i = 0; i < g_.ni; ++i)
                    for (std::size_t x = 0; x < g_.nx; ++x)
                        t.respond(((j * g_.nw + w) * g_.ni + i) * g_.nx + x, resp(j, w, i, g_.xhat(i, x))) = 1.0;
        for (const auto& e : post_) t.post.push_back(mk(post_in, d_sys, e));
        return t;
    }

  private:
    std::size_t& resp(std::size_t j, std::size_t w, std::size_t i, std::size_t xh) {
        return resp_[((j * g_.nw + w) * g_.ni + i) * g_.nx + xh];
    }
    std::size_t resp(std::size_t j, std::size_t w, std::size_t i, std::size_t xh) const {
        return resp_[((j * g_.nw + w) * g_.ni + i) * g_.nx + xh];
    }
    const Matrix& q(std::size_t w, std::size_t i, std::size_t x) const { return q_[(w * g_.ni + i) * g_.nx + x]; }
    const std::vector<Matrix>& le(std::size_t w, std::size_t k, std::size_t s) const {
        return le_[(w * g_.nk + k) * g_.ns + s];
    }
    const Matrix& lk(std::size_t j, std::size_t y) const { return lk_[j * g_.ny + y]; }

    void refresh_pre() {
        q_.clear();
        for (std::size_t w = 0; w < g_.nw; ++w) {
            const Matrix lp = choi_to_liouville(pre_[w], g_.dc, g_.da * g_.dm);
            for (std::size_t k = 0; k < g_.ni * g_.nx; ++k) q_.push_back(g_.lr[k] * lp);
        }
    }
    void refresh_post(std::size_t p) {
        le_[p].clear();
        for (const auto& c : post_[p]) le_[p].push_back(choi_to_liouville(c, g_.db * g_.dm, g_.dd));
    }
    void refresh() {
        refresh_pre();
        le_.assign(post_.size(), {});
        for (std::size_t p = 0; p < post_.size(); ++p) refresh_post(p);
    }

    // Contribution of (j, w, i, x) when II answers (y, k).
    double contribution(std::size_t j, std::size_t w, std::size_t i, std::size_t x, std::size_t y,
                        std::size_t k) const {
        const auto& e = le(w, k, g_.slot(i, x));
        const Matrix& qq = q(w, i, x);
        if (g_.fw != Framework::Ex) return norm_ * pair_sum(lk(j, y), e[0] * qq);
        double v = 0.0;
        for (std::size_t z = 0; z < g_.nz; ++z) v += pair_sum(lk(j, j == g_.jstar ? y : z), e[z] * qq);
        return norm_ * v;
    }

    double classical_step() {
        double total = 0.0;
        for (std::size_t j = 0; j < g_.nj; ++j)
            for (std::size_t w = 0; w < g_.nw; ++w) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < g_.ni; ++i) {
                    double tot = 0.0;
                    const std::size_t groups = g_.sees(i) ? g_.nx : 1;
                    for (std::size_t xh = 0; xh < groups; ++xh) {
                        double top = -std::numeric_limits<double>::infinity();
                        std::size_t arg = 0;
                        for (std::size_t yk = 0; yk < g_.ny * g_.nk; ++yk) {
                            const std::size_t y = yk / g_.nk, k = yk % g_.nk;
                            if (g_.fw == Framework::Ex && j != g_.jstar && y != 0) continue;
                            double v = 0.0;
                            if (g_.sees(i)) {
                                v = contribution(j, w, i, xh, y, k);
                            } else {
                                for (std::size_t x = 0; x < g_.nx; ++x) v += contribution(j, w, i, x, y, k);
                            }
                            if (v > top + 1e-15) {
                                top = v;
                                arg = yk;
                            }
                        }
                        resp(j, w, i, xh) = arg;
                        tot += top;
                    }
                    if (tot > best + 1e-15) {
                        best = tot;
                        ich_[j * g_.nw + w] = i;
                    }
                }
                total += best;
            }
        return total;
    }

    template <class F>
    void for_each_term(F&& f) const {
        for (std::size_t j = 0; j < g_.nj; ++j)
            for (std::size_t w = 0; w < g_.nw; ++w) {
                const std::size_t i = ich_[j * g_.nw + w];
                for (std::size_t x = 0; x < g_.nx; ++x) {
                    const std::size_t yk = resp(j, w, i, g_.xhat(i, x));
                    f(j, w, i, x, yk / g_.nk, yk % g_.nk);
                }
            }
    }

    void pre_step() {
        std::vector<Matrix> gam(g_.nw, Matrix::Zero(ix(g_.da * g_.dm * g_.da * g_.dm), ix(g_.dc * g_.dc)));
        for_each_term([&](std::size_t j, std::size_t w, std::size_t i, std::size_t x, std::size_t y, std::size_t k) {
            const auto& e = le(w, k, g_.slot(i, x));
            const Matrix& r = g_.lr[i * g_.nx + x];
            if (g_.fw != Framework::Ex) {
                gam[w] += (e[0] * r).transpose() * lk(j, y);
            } else {
                for (std::size_t z = 0; z < g_.nz; ++z)
                    gam[w] += (e[z] * r).transpose() * lk(j, j == g_.jstar ? y : z);
            }
        });
        std::vector<Matrix> h;
        for (auto& m : gam) h.push_back(herm(Matrix(norm_ * liouville_to_choi(m, g_.dc, g_.da * g_.dm)).conjugate()));
        const auto next = pre_set_.maximize(h, pre_, qp_iters_);
        double old_v = 0.0, new_v = 0.0;
        for (std::size_t w = 0; w < g_.nw; ++w) {
            old_v += inner(h[w], pre_[w]);
            new_v += inner(h[w], next[w]);
        }
        if (new_v > old_v) {
            pre_ = next;
            refresh_pre();
        }
    }

    void post_step() {
        const std::size_t np = post_.size();
        std::vector<std::vector<Matrix>> gam(np);
        for_each_term([&](std::size_t j, std::size_t w, std::size_t i, std::size_t x, std::size_t y, std::size_t k) {
            const std::size_t p = (w * g_.nk + k) * g_.ns + g_.slot(i, x);
            if (gam[p].empty())
                gam[p].assign(g_.nz, Matrix::Zero(ix(g_.dd * g_.dd), ix(g_.db * g_.dm * g_.db * g_.dm)));
            const Matrix qt = q(w, i, x).transpose();
            if (g_.fw != Framework::Ex) {
                gam[p][0] += lk(j, y) * qt;
            } else {
                for (std::size_t z = 0; z < g_.nz; ++z) gam[p][z] += lk(j, j == g_.jstar ? y : z) * qt;
            }
        });
        for (std::size_t p = 0; p < np; ++p) {
            if (gam[p].empty()) continue;
            std::vector<Matrix> h;
            for (auto& m : gam[p])
                h.push_back(herm(Matrix(norm_ * liouville_to_choi(m, g_.db * g_.dm, g_.dd)).conjugate()));
            const auto next = post_set_.maximize(h, post_[p], qp_iters_);
            double old_v = 0.0, new_v = 0.0;
            for (std::size_t z = 0; z < g_.nz; ++z) {
                old_v += inner(h[z], post_[p][z]);
                new_v += inner(h[z], next[z]);
            }
            if (new_v > old_v) {
                post_[p] = next;
                refresh_post(p);
            }
        }
    }

    Wiring g_;
    std::size_t qp_iters_;
    InstrumentSet pre_set_, post_set_;
    double norm_ = 1.0;
    std::vector<Matrix> lk_;
    std::vector<Matrix> pre_;
    std::vector<std::vector<Matrix>> post_;
    std::vector<std::size_t> ich_, resp_;
    std::vector<Matrix> q_;
    std::vector<std::vector<Matrix>> le_;
};

}  // namespace

UtilityReport utility(const ProgrammableInstrument& pi, const GuessingGame& game, Framework f,
                      const GameConfig& cfg) {
    require_game(game);
    if (auto v = validate(pi, 1e-7); !v) throw ProtocolError("resource: " + v.violation);
    require(pi.common_output(), "resource programs need a common output dimension");
    const auto& ref = game.referee;
    Wiring g;
    g.fw = f;
    g.nj = ref.size();
    g.ny = ref.max_outcomes();
    g.ni = pi.size();
    g.nx = pi.max_outcomes();
    g.dc = ref.instruments[0].din();
    g.dd = ref.instruments[0].dout();
    g.da = total_dim(pi.input());
    g.db = pi.instruments[0].dout();
    g.dm = cfg.memory ? cfg.memory : g.dc;
    g.nw = cfg.forward ? cfg.forward : g.nx * g.ni;
    g.nk = f == Framework::C ? 1 : (cfg.backward ? cfg.backward : g.nx * g.nw);
    g.ns = f == Framework::Ex ? g.nx + 1 : 1;
    g.nz = f == Framework::Ex ? g.ny : 1;
    g.lift_resource(pi);

    const Systems& c_sys = ref.instruments[0].input;
    const Systems& d_sys = ref.instruments[0].output;
    const Systems pre_out = memory_system(pi.input(), g.dm);
    const Systems post_in = memory_system(pi.instruments[0].output, g.dm);

    UtilityReport rep;
    rep.framework = f;
    rep.restarts = std::max<std::size_t>(cfg.restarts, 1);
    Ascent ascent(g, game, cfg.qp_iterations);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rep.restarts; ++r) {
        Wiring& w = ascent.wiring();
        if (f == Framework::Ex) {
            w.istar = cfg.resource_designated.value_or(r % g.ni);
            w.jstar = cfg.designated.value_or((r / g.ni) % g.nj);
            require(w.istar < g.ni && w.jstar < g.nj, "designated program out of range");
        }
        Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + r + 1);
        if (r > 0 || !ascent.seed_identity()) ascent.seed_random(rng, c_sys, pre_out, post_in, d_sys);
        ascent.run(cfg.iterations, rep.iterations);
        FreeProtocol t = ascent.protocol(c_sys, pre_out, post_in, d_sys);
        const double v = evaluate(t, pi, game);
        rep.restart_values.push_back(v);
        if (v > best) {
            best = v;
            rep.protocol = std::move(t);
        }
    }
    rep.value = best;
    std::ostringstream d;
    d << "best of " << rep.restarts << " restarts";
    rep.diagnostics = d.str();
    return rep;
}

// ------------------------------------------------------------- simulation

FreeProtocol simulate_free(const ProgrammableInstrument& target, const ClassicalCertificate& cert) {
    const Instrument& h = cert.mother;
    require(cert.mu.programs() == target.size(), "certificate does not match the target's programs");
    require(cert.mu.mother_outcomes() == h.size(), "certificate post-processing does not match its mother");
    const std::size_t dd = h.dout(), nw = h.size(), nj = target.size(), ny = cert.mu.outcomes();
    FreeProtocol t;
    t.framework = Framework::C;
    t.programs = nj;
    t.outcomes = ny;
    t.memory = dd;
    t.pre = mk(h.input, memory_system(kTrivialIn, dd), h.chois);
    t.choose = Conditional(nj * nw, 1);
    t.respond = Conditional(nj * nw, ny);
    for (std::size_t j = 0; j < nj; ++j)
        for (std::size_t w = 0; w < nw; ++w) {
            t.choose(j * nw + w, 0) = 1.0;
            for (std::size_t y = 0; y < ny; ++y) t.respond(j * nw + w, y) = cert.mu(y, w, j);
        }
    for (std::size_t w = 0; w < nw; ++w)
        t.post.push_back(mk(memory_system(kTrivialOut, dd), h.output, {kraus_choi(eye(dd))}));
    return t;
}

FreeProtocol simulate_free(const ProgrammableInstrument& target, const QCompatCertificate& cert) {
    const Instrument& h = cert.mother;
    require(cert.mu.programs() == target.size(), "certificate does not match the target's programs");
    require(cert.mu.mother_outcomes() == h.size(), "certificate post-processing does not match its mother");
    const std::size_t dh = h.dout(), nw = h.size(), nj = target.size(), ny = cert.mu.outcomes();
    require(cert.post.size() == nj * nw * ny, "certificate has the wrong number of post-processings");
    require(target.common_output(), "target programs need a common output dimension");
    FreeProtocol t;
    t.framework = Framework::Q;
    t.programs = nj;
    t.outcomes = ny;
    t.memory = dh;
    t.messages = ny * nj;
    t.pre = mk(h.input, memory_system(kTrivialIn, dh), h.chois);
    t.choose = Conditional(nj * nw, 1);
    t.respond = Conditional(nj * nw, ny * t.messages);
    for (std::size_t j = 0; j < nj; ++j)
        for (std::size_t w = 0; w < nw; ++w) {
            t.choose(j * nw + w, 0) = 1.0;
            for (std::size_t y = 0; y < ny; ++y) t.respond(j * nw + w, y * t.messages + y * nj + j) = cert.mu(y, w, j);
        }
    const Systems in = memory_system(kTrivialOut, dh);
    const Systems& out = target.instruments[0].output;
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t j = 0; j < nj; ++j) t.post.push_back(mk(in, out, {cert.post_channel(y, w, j).choi}));
    return t;
}

FreeProtocol simulate_free(const ProgrammableInstrument& target, const NoExclusionCertificate& cert) {
    const std::size_t nj = target.size(), ny = target.max_outcomes();
    require(cert.first < nj, "certificate names an unknown first program");
    std::vector<int> slot(nj, -1);
    for (std::size_t t = 0; t < cert.targets.size(); ++t) {
        require(cert.targets[t] < nj, "certificate names an unknown program");
        slot[cert.targets[t]] = static_cast<int>(t);
    }
    for (std::size_t j = 0; j < nj; ++j)
        require(j == cert.first || slot[j] >= 0, "certificate does not recover program " + target.programs[j]);
    require(target.common_output(), "target programs need a common output dimension");
    const Instrument& h = cert.mother;
    const std::size_t dh = h.dout(), nw = h.size(), nx = cert.mu.outcomes();
    require(nx <= ny, "certificate has more outcomes than the target");
    require(cert.post.size() == nw * nx, "certificate has the wrong number of post-processings");
    FreeProtocol t;
    t.framework = Framework::Ex;
    t.programs = nj;
    t.outcomes = ny;
    t.memory = dh;
    t.messages = ny + nj;
    t.designated = cert.first;
    t.pre = mk(h.input, memory_system(kTrivialIn, dh), h.chois);
    t.choose = Conditional(nj * nw, 1);
    t.respond = Conditional(nj * nw, ny * t.messages);
    for (std::size_t j = 0; j < nj; ++j)
        for (std::size_t w = 0; w < nw; ++w) {
            t.choose(j * nw + w, 0) = 1.0;
            if (j == cert.first) {
                for (std::size_t y = 0; y < nx; ++y) t.respond(j * nw + w, y * t.messages + y) = cert.mu(y, w, 0);
            } else {
                t.respond(j * nw + w, ny + j) = 1.0;
            }
        }
    const Systems in = memory_system(kTrivialOut, dh);
    const Systems& out = target.instruments[0].output;
    const std::size_t d = dh * total_dim(out);
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t k = 0; k < t.messages; ++k)
            for (std::size_t s = 0; s < 2; ++s) {
                if (s == 0 && k < nx) {
                    std::vector<Matrix> c(ny, zeros(d));
                    c[0] = cert.post[w * nx + k].choi;
                    t.post.push_back(mk(in, out, std::move(c)));
                } else if (s == 0 && k >= ny && k - ny != cert.first) {
                    Instrument r = cert.recovery[static_cast<std::size_t>(slot[k - ny])][w].padded(ny);
                    t.post.push_back(mk(in, out, r.chois));
                } else {
                    t.post.push_back(dummy_instrument(in, out, ny));
                }
            }
    return t;
}

FreeProtocol simulate_free(Framework f, const ProgrammableInstrument& target, const CompatConfig& cfg) {
    const Verdict v = check(free_notion(f), target, cfg);
    if (f == Framework::C && v.classical) return simulate_free(target, *v.classical);
    if (f == Framework::Q && v.q) return simulate_free(target, *v.q);
    if (f == Framework::Ex && v.no_exclusion.size() == 1) return simulate_free(target, v.no_exclusion[0]);
    throw ProtocolError("no " + to_string(free_notion(f)) + " certificate for the target (" + to_string(v.status) +
                        ")");
}

// ----------------------------------------------------------- thresholds

namespace {

struct Referee {
    std::size_t nj = 0, ny = 0, dc = 0, dd = 0;
    std::vector<Matrix> h;  ///< objective blocks C_K^T / (|J| d_C d_D), index j * |Y| + y
    Systems c_sys, d_sys;

    const Matrix& at(std::size_t j, std::size_t y) const { return h[j * ny + y]; }
    ProgrammableInstrument shape() const {
        std::vector<Instrument> ins(nj, mk(c_sys, d_sys, std::vector<Matrix>(ny, zeros(dc * dd))));
        return family_of(std::move(ins));
    }
};

Referee referee_of(const GuessingGame& game) {
    Referee r;
    const auto& ref = game.referee;
    r.nj = ref.size();
    r.ny = ref.max_outcomes();
    r.dc = ref.instruments[0].din();
    r.dd = ref.instruments[0].dout();
    r.c_sys = ref.instruments[0].input;
    r.d_sys = ref.instruments[0].output;
    const double norm = 1.0 / static_cast<double>(r.nj * r.dc * r.dd);
    for (std::size_t j = 0; j < r.nj; ++j)
        for (std::size_t y = 0; y < r.ny; ++y)
            r.h.push_back(y < ref.instruments[j].size() ? Matrix(norm * ref.instruments[j].chois[y].transpose())
                                                        : zeros(r.dc * r.dd));
    return r;
}

std::size_t product_size(std::size_t base, std::size_t n) {
    std::size_t p = 1;
    for (std::size_t k = 0; k < n; ++k) {
        p *= base;
        require(p <= 4096, "product outcome set too large");
    }
    return p;
}

void add_normalization(AffinePsdProblem& p, const std::vector<std::size_t>& blocks, std::size_t dd, std::size_t dc) {
    p.add_matrix_equality(
        [&](const Matrix& f) {
            std::vector<ConstraintTerm> t;
            for (auto b : blocks) t.push_back({b, kron_plain(eye(dd), f)});
            return t;
        },
        eye(dc));
}

void add_marginal_equality(AffinePsdProblem& p, const std::vector<std::size_t>& lhs, std::size_t rhs, std::size_t dd,
                           std::size_t dc) {
    p.add_matrix_equality(
        [&](const Matrix& f) {
            std::vector<ConstraintTerm> t;
            for (auto b : lhs) t.push_back({b, kron_plain(eye(dd), f)});
            t.push_back({rhs, -kron_plain(eye(dd), f)});
            return t;
        },
        zeros(dc));
}

FreeProtocol threshold_c(const Referee& r, std::size_t iters) {
    const std::size_t nw = product_size(r.ny, r.nj);
    AffinePsdProblem p;
    std::vector<std::size_t> all;
    std::vector<Matrix> h;
    for (std::size_t w = 0; w < nw; ++w) {
        all.push_back(p.add_block("G" + std::to_string(w), r.dd * r.dc));
        Matrix hw = zeros(r.dd * r.dc);
        const auto dg = digits(w, r.ny, r.nj);
        for (std::size_t j = 0; j < r.nj; ++j) hw += r.at(j, dg[j]);
        h.push_back(hw);
    }
    add_normalization(p, all, r.dd, r.dc);
    const auto g = repair_instrument(maximize_linear(p, h, iters), r.dc, r.dd);
    ClassicalCertificate cert{mk(r.c_sys, r.d_sys, g), StochasticMatrix(r.ny, nw, r.nj)};
    for (std::size_t w = 0; w < nw; ++w) {
        const auto dg = digits(w, r.ny, r.nj);
        for (std::size_t j = 0; j < r.nj; ++j) cert.mu(dg[j], w, j) = 1.0;
    }
    return simulate_free(r.shape(), cert);
}

FreeProtocol threshold_q(const Referee& r, std::size_t iters) {
    const std::size_t nw = product_size(r.ny, r.nj), nj = r.nj;
    AffinePsdProblem p;
    std::vector<Matrix> h;
    std::vector<std::size_t> heads;
    for (std::size_t w = 0; w < nw; ++w) {
        const auto dg = digits(w, r.ny, nj);
        for (std::size_t j = 0; j < nj; ++j) {
            p.add_block("G" + std::to_string(w) + "/" + std::to_string(j), r.dd * r.dc);
            h.push_back(r.at(j, dg[j]));
        }
        heads.push_back(w * nj);
    }
    add_normalization(p, heads, r.dd, r.dc);
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t j = 1; j < nj; ++j) add_marginal_equality(p, {w * nj + j}, w * nj, r.dd, r.dc);
    const auto g = maximize_linear(p, h, iters);

    std::vector<Matrix> effects;
    for (std::size_t w = 0; w < nw; ++w) effects.push_back(Matrix(trace_head(g[w * nj], r.dd).transpose()));
    effects = normalize_effects(std::move(effects));
    QCompatCertificate cert{Instrument{}, StochasticMatrix(r.ny, nw, nj), {}};
    cert.post.resize(nj * nw * r.ny);
    std::vector<Matrix> mother;
    for (std::size_t w = 0; w < nw; ++w) {
        const Luders l = luders(effects[w]);
        mother.push_back(kraus_choi(l.root));
        const auto dg = digits(w, r.ny, nj);
        for (std::size_t j = 0; j < nj; ++j) {
            cert.mu(dg[j], w, j) = 1.0;
            for (std::size_t y = 0; y < r.ny; ++y) {
                const Matrix d = y == dg[j] ? factor_through({g[w * nj + j]}, l, r.dc, r.dd)[0]
                                            : mixed_prepare_choi(r.dc, r.dd);
                cert.post[(j * nw + w) * r.ny + y] = CpMap(r.c_sys, r.d_sys, d);
            }
        }
    }
    cert.mother = mk(r.c_sys, r.c_sys, std::move(mother));
    return simulate_free(r.shape(), cert);
}

FreeProtocol threshold_ex(const Referee& r, std::size_t jstar, std::size_t iters) {
    const std::size_t nx = r.ny;
    AffinePsdProblem p;
    std::vector<Matrix> h;
    std::vector<std::size_t> heads;
    for (std::size_t x = 0; x < nx; ++x) {
        heads.push_back(p.add_block("G" + std::to_string(x), r.dd * r.dc));
        h.push_back(r.at(jstar, x));
    }
    add_normalization(p, heads, r.dd, r.dc);
    // S^{(j)}_{x,y} at sblock[(j * nx + x) * ny + y]
    std::vector<std::size_t> sblock(r.nj * nx * r.ny, 0);
    for (std::size_t j = 0; j < r.nj; ++j) {
        if (j == jstar) continue;
        for (std::size_t x = 0; x < nx; ++x) {
            std::vector<std::size_t> row;
            for (std::size_t y = 0; y < r.ny; ++y) {
                const std::size_t b = p.add_block("S" + std::to_string(j) + "/" + std::to_string(x) + "/" +
                                                      std::to_string(y),
                                                  r.dd * r.dc);
                sblock[(j * nx + x) * r.ny + y] = b;
                row.push_back(b);
                h.push_back(r.at(j, y));
            }
            add_marginal_equality(p, row, heads[x], r.dd, r.dc);
        }
    }
    const auto g = maximize_linear(p, h, iters);

    std::vector<Matrix> effects;
    for (std::size_t x = 0; x < nx; ++x) effects.push_back(Matrix(trace_head(g[heads[x]], r.dd).transpose()));
    effects = normalize_effects(std::move(effects));
    NoExclusionCertificate cert;
    cert.first = jstar;
    cert.mu = StochasticMatrix(nx, nx, 1);
    std::vector<Matrix> mother;
    for (std::size_t j = 0; j < r.nj; ++j)
        if (j != jstar) {
            cert.targets.push_back(j);
            cert.recovery.emplace_back();
        }
    for (std::size_t w = 0; w < nx; ++w) {
        const Luders l = luders(effects[w]);
        mother.push_back(kraus_choi(l.root));
        cert.mu(w, w, 0) = 1.0;
        for (std::size_t x = 0; x < nx; ++x) {
            const Matrix d =
                x == w ? factor_through({g[heads[w]]}, l, r.dc, r.dd)[0] : mixed_prepare_choi(r.dc, r.dd);
            cert.post.emplace_back(r.c_sys, r.d_sys, d);
        }
        for (std::size_t t = 0; t < cert.targets.size(); ++t) {
            std::vector<Matrix> s;
            for (std::size_t y = 0; y < r.ny; ++y) s.push_back(g[sblock[(cert.targets[t] * nx + w) * r.ny + y]]);
            cert.recovery[t].push_back(mk(r.c_sys, r.d_sys, factor_through(s, l, r.dc, r.dd)));
        }
    }
    cert.mother = mk(r.c_sys, r.c_sys, std::move(mother));
    return simulate_free(r.shape(), cert);
}

}  // namespace

UtilityReport free_threshold(const GuessingGame& game, Framework f, const GameConfig& cfg) {
    require_game(game);
    const Referee r = referee_of(game);
    const ProgrammableInstrument trivial = trivial_resource();
    const std::size_t iters = std::max<std::size_t>(cfg.qp_iterations, 1) * 5;
    UtilityReport rep;
    rep.framework = f;
    auto consider = [&](FreeProtocol t, const std::string& label) {
        t = embed(t, f);
        const double v = evaluate(t, trivial, game);
        rep.restart_values.push_back(v);
        if (rep.restart_values.size() == 1 || v > rep.value) {
            rep.value = v;
            rep.protocol = std::move(t);
            rep.diagnostics = "optimal free family from the " + label + " program";
        }
    };
    consider(threshold_c(r, iters), "classical");
    if (f != Framework::C) consider(threshold_q(r, iters), "q");
    if (f == Framework::Ex) {
        for (std::size_t j = 0; j < r.nj; ++j)
            if (!cfg.designated || *cfg.designated == j) consider(threshold_ex(r, j, iters), "exclusivity");
    }
    rep.restarts = rep.restart_values.size();
    return rep;
}

// ------------------------------------------------------------ combinators

FreeProtocol embed(const FreeProtocol& t, Framework to) {
    if (to == t.framework) return t;
    require(static_cast<int>(to) > static_cast<int>(t.framework), "cannot embed into a smaller framework");
    if (t.framework == Framework::C) {
        FreeProtocol q = t;
        q.framework = Framework::Q;
        return embed(q, to);
    }
    require(t.resource_programs == 1, "embedding into ex needs a single-program resource");
    FreeProtocol e = t;
    e.framework = Framework::Ex;
    e.designated = 0;
    e.resource_designated = 0;
    const std::size_t ny = t.outcomes, nk = t.messages, nw = t.forward();
    e.messages = ny * nk;
    e.respond = Conditional(t.respond.conditions, ny * e.messages);
    for (std::size_t c = 0; c < t.respond.conditions; ++c)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t k = 0; k < nk; ++k) e.respond(c, y * e.messages + y * nk + k) = t.respond(c, y * nk + k);
    e.post.clear();
    const Instrument& p0 = t.post[0];
    const std::size_t d = p0.din() * p0.dout();
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t kk = 0; kk < e.messages; ++kk)
            for (std::size_t s = 0; s < e.slots(); ++s) {
                if (s != 0) {
                    e.post.push_back(dummy_instrument(p0.input, p0.output, ny));
                    continue;
                }
                std::vector<Matrix> c(ny, zeros(d));
                c[kk / nk] = t.post_at(w, kk % nk, 0).chois[0];
                e.post.push_back(mk(p0.input, p0.output, std::move(c)));
            }
    return e;
}

FreeProtocol compose_protocols(const FreeProtocol& outer, const FreeProtocol& inner) {
    outer.check();
    inner.check();
    require(outer.framework == inner.framework, "cannot compose protocols of different frameworks");
    require(outer.resource_programs == inner.programs && outer.resource_outcomes == inner.outcomes,
            "outer protocol does not accept the inner protocol's programs and outcomes");
    const std::size_t dmo = outer.memory, dmi = inner.memory;
    const std::size_t dci = inner.pre.din(), ddi = inner.post[0].dout();
    if (outer.pre.dout() != dci * dmo || outer.post[0].din() != ddi * dmo)
        throw DimensionError("outer protocol does not chain with the inner protocol's systems");
    const bool ex = outer.framework == Framework::Ex;
    if (ex) require(outer.resource_designated == inner.designated, "designated programs do not chain");

    FreeProtocol t;
    t.framework = outer.framework;
    t.programs = outer.programs;
    t.outcomes = outer.outcomes;
    t.resource_programs = inner.resource_programs;
    t.resource_outcomes = inner.resource_outcomes;
    t.designated = outer.designated;
    t.resource_designated = inner.resource_designated;
    t.memory = dmi * dmo;
    const std::size_t wo = outer.forward(), wi = inner.forward(), nw = wo * wi;
    const std::size_t ji = inner.programs, ro = outer.registers, ri = inner.registers;
    const std::size_t ko = outer.messages, ki = inner.messages, flags = ex ? 2 : 1;
    const std::size_t ni = t.resource_programs, nx = t.resource_outcomes, xo = outer.resource_outcomes;
    t.registers = ji * ro * ri;
    t.messages = ki * ko * flags;

    const std::size_t dai = inner.pre.dout();  // A (x) M_i
    std::vector<Matrix> pre;
    for (std::size_t a = 0; a < wo; ++a)
        for (std::size_t b = 0; b < wi; ++b) {
            const Matrix lifted = with_identity(inner.pre.chois[b], dci, dai, dmo);
            pre.push_back(compose_choi(lifted, outer.pre.chois[a], outer.pre.din(), dci * dmo, dai * dmo));
        }
    t.pre = mk(outer.pre.input, memory_system(strip_memory(inner.pre.output), t.memory), std::move(pre));

    t.choose = Conditional(t.programs * nw, ni * t.registers);
    for (std::size_t l = 0; l < t.programs; ++l)
        for (std::size_t a = 0; a < wo; ++a)
            for (std::size_t b = 0; b < wi; ++b)
                for (std::size_t j = 0; j < ji; ++j)
                    for (std::size_t r1 = 0; r1 < ro; ++r1) {
                        const double po = outer.choose(l * wo + a, j * ro + r1);
                        if (po == 0.0) continue;
                        for (std::size_t i = 0; i < ni; ++i)
                            for (std::size_t r2 = 0; r2 < ri; ++r2) {
                                const double pi_ = inner.choose(j * wi + b, i * ri + r2);
                                const std::size_t r = (j * ro + r1) * ri + r2;
                                t.choose(l * nw + a * wi + b, i * t.registers + r) += po * pi_;
                            }
                    }

    t.respond = Conditional(t.programs * nw * ni * t.registers * nx, t.outcomes * t.messages);
    for (std::size_t l = 0; l < t.programs; ++l)
        for (std::size_t a = 0; a < wo; ++a)
            for (std::size_t b = 0; b < wi; ++b)
                for (std::size_t i = 0; i < ni; ++i)
                    for (std::size_t j = 0; j < ji; ++j)
                        for (std::size_t r1 = 0; r1 < ro; ++r1)
                            for (std::size_t r2 = 0; r2 < ri; ++r2)
                                for (std::size_t x = 0; x < nx; ++x) {
                                    const std::size_t w = a * wi + b, r = (j * ro + r1) * ri + r2;
                                    const std::size_t row =
                                        (((l * nw + w) * ni + i) * t.registers + r) * nx + x;
                                    const std::size_t xi = (ex && i != inner.resource_designated) ? 0 : x;
                                    const std::size_t row_i = (((j * wi + b) * ni + i) * ri + r2) * nx + xi;
                                    const std::size_t flag = (ex && j != inner.designated) ? 1 : 0;
                                    for (std::size_t y = 0; y < inner.outcomes; ++y)
                                        for (std::size_t k1 = 0; k1 < ki; ++k1) {
                                            const double p1 = inner.respond(row_i, y * ki + k1);
                                            if (p1 == 0.0) continue;
                                            const std::size_t yh = flag ? 0 : y;
                                            const std::size_t row_o = (((l * wo + a) * ji + j) * ro + r1) * xo + yh;
                                            for (std::size_t v = 0; v < t.outcomes; ++v)
                                                for (std::size_t k2 = 0; k2 < ko; ++k2) {
                                                    const double p2 = outer.respond(row_o, v * ko + k2);
                                                    if (p2 == 0.0) continue;
                                                    const std::size_t k = (k1 * ko + k2) * flags + flag;
                                                    t.respond(row, v * t.messages + k) += p1 * p2;
                                                }
                                        }
                                }

    const std::size_t dbm = inner.post[0].din();  // B (x) M_i
    const std::size_t df = outer.post[0].dout();
    const Systems post_in = memory_system(strip_memory(inner.post[0].input), t.memory);
    const Systems& post_out = outer.post[0].output;
    const std::size_t nz = ex ? t.outcomes : 1;
    auto lift = [&](const Matrix& e) { return with_identity(e, dbm, ddi, dmo); };
    auto chain = [&](const Matrix& eo, const Matrix& lifted) {
        return compose_choi(eo, lifted, dbm * dmo, ddi * dmo, df);
    };
    for (std::size_t a = 0; a < wo; ++a)
        for (std::size_t b = 0; b < wi; ++b)
            for (std::size_t k = 0; k < t.messages; ++k)
                for (std::size_t s = 0; s < t.slots(); ++s) {
                    const std::size_t flag = k % flags, k2 = (k / flags) % ko, k1 = k / flags / ko;
                    const Instrument& ei = inner.post_at(b, k1, s);
                    std::vector<Matrix> c(nz, zeros(df * dbm * dmo));
                    if (!ex) {
                        c[0] = chain(outer.post_at(a, k2, 0).chois[0], lift(ei.chois[0]));
                    } else if (flag == 0) {
                        const Matrix lifted = lift(ei.sum_choi());
                        const Instrument& eo = outer.post_at(a, k2, 0);
                        for (std::size_t z = 0; z < nz; ++z) c[z] = chain(eo.chois[z], lifted);
                    } else {
                        for (std::size_t zi = 0; zi < ei.size(); ++zi) {
                            const Matrix lifted = lift(ei.chois[zi]);
                            const Instrument& eo = outer.post_at(a, k2, 1 + zi);
                            for (std::size_t z = 0; z < nz; ++z) c[z] += chain(eo.chois[z], lifted);
                        }
                    }
                    t.post.push_back(mk(post_in, post_out, std::move(c)));
                }
    return t;
}

FreeProtocol mix_protocols(const FreeProtocol& a, const FreeProtocol& b, double weight) {
    a.check();
    b.check();
    require(weight >= 0.0 && weight <= 1.0, "mixing weight must lie in [0, 1]");
    require(a.framework == b.framework && a.programs == b.programs && a.outcomes == b.outcomes &&
                a.resource_programs == b.resource_programs && a.resource_outcomes == b.resource_outcomes &&
                a.memory == b.memory && a.designated == b.designated &&
                a.resource_designated == b.resource_designated,
            "mixed protocols must share framework, alphabets, memory and designations");
    if (a.pre.din() != b.pre.din() || a.pre.dout() != b.pre.dout() || a.post[0].din() != b.post[0].din() ||
        a.post[0].dout() != b.post[0].dout())
        throw DimensionError("mixed protocols act on different systems");
    FreeProtocol t = a;
    const std::size_t wa = a.forward(), wb = b.forward(), nw = wa + wb;
    t.registers = std::max(a.registers, b.registers);
    t.messages = std::max(a.messages, b.messages);
    std::vector<Matrix> pre;
    for (const auto& c : a.pre.chois) pre.push_back(weight * c);
    for (const auto& c : b.pre.chois) pre.push_back((1.0 - weight) * c);
    t.pre = mk(a.pre.input, a.pre.output, std::move(pre));
    const std::size_t ni = a.resource_programs, nx = a.resource_outcomes, nr = t.registers, nk = t.messages;
    t.choose = Conditional(a.programs * nw, ni * nr);
    t.respond = Conditional(a.programs * nw * ni * nr * nx, a.outcomes * nk);
    for (std::size_t j = 0; j < a.programs; ++j)
        for (std::size_t w = 0; w < nw; ++w) {
            const bool first = w < wa;
            const FreeProtocol& src = first ? a : b;
            const std::size_t ws = first ? w : w - wa, sw = src.forward();
            for (std::size_t i = 0; i < ni; ++i)
                for (std::size_t r = 0; r < src.registers; ++r)
                    t.choose(j * nw + w, i * nr + r) = src.choose(j * sw + ws, i * src.registers + r);
            for (std::size_t i = 0; i < ni; ++i)
                for (std::size_t r = 0; r < nr; ++r)
                    for (std::size_t x = 0; x < nx; ++x) {
                        const std::size_t row = (((j * nw + w) * ni + i) * nr + r) * nx + x;
                        if (r >= src.registers) {
                            t.respond(row, 0) = 1.0;
                            continue;
                        }
                        const std::size_t srow = (((j * sw + ws) * ni + i) * src.registers + r) * nx + x;
                        for (std::size_t y = 0; y < a.outcomes; ++y)
                            for (std::size_t k = 0; k < src.messages; ++k)
                                t.respond(row, y * nk + k) = src.respond(srow, y * src.messages + k);
                    }
        }
    t.post.clear();
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t k = 0; k < nk; ++k)
            for (std::size_t s = 0; s < t.slots(); ++s) {
                const bool first = w < wa;
                const FreeProtocol& src = first ? a : b;
                const std::size_t ws = first ? w : w - wa;
                t.post.push_back(k < src.messages ? src.post_at(ws, k, s) : src.post_at(ws, 0, s));
            }
    return t;
}

FreeProtocol discard_resource(const FreeProtocol& t, const ProgrammableInstrument& pi) {
    t.check();
    require(t.resource_programs == 1 && t.resource_outcomes == 1 && t.pre.dout() == t.memory &&
                t.post[0].din() == t.memory,
            "protocol must act on the trivial resource");
    require(pi.common_output(), "resource programs need a common output dimension");
    const std::size_t da = total_dim(pi.input()), db = pi.instruments[0].dout(), dm = t.memory;
    const std::size_t ni = pi.size(), nx = pi.max_outcomes(), nw = t.forward();
    FreeProtocol d = t;
    d.resource_programs = ni;
    d.resource_outcomes = nx;
    d.resource_designated = 0;
    std::vector<Matrix> pre;
    for (const auto& c : t.pre.chois) pre.push_back(kron_plain(eye(da) / static_cast<double>(da), c));
    d.pre = mk(t.pre.input, memory_system(pi.input(), dm), std::move(pre));
    d.choose = Conditional(t.programs * nw, ni * t.registers);
    for (std::size_t c = 0; c < t.programs * nw; ++c)
        for (std::size_t r = 0; r < t.registers; ++r) d.choose(c, r) = t.choose(c, r);
    d.respond = Conditional(t.programs * nw * ni * t.registers * nx, t.outcomes * t.messages);
    for (std::size_t jw = 0; jw < t.programs * nw; ++jw)
        for (std::size_t i = 0; i < ni; ++i)
            for (std::size_t r = 0; r < t.registers; ++r)
                for (std::size_t x = 0; x < nx; ++x)
                    for (std::size_t o = 0; o < t.outcomes * t.messages; ++o)
                        d.respond(((jw * ni + i) * t.registers + r) * nx + x, o) = t.respond(jw * t.registers + r, o);
    d.post.clear();
    const Systems post_in = memory_system(pi.instruments[0].output, dm);
    const std::size_t dd = t.post[0].dout();
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t k = 0; k < t.messages; ++k)
            for (std::size_t s = 0; s < d.slots(); ++s) {
                std::vector<Matrix> c;
                for (const auto& e : t.post_at(w, k, 0).chois)
                    c.push_back(permute_factors(kron_plain(e, eye(db)), {dd, dm, db}, {0, 2, 1}));
                d.post.push_back(mk(post_in, t.post[0].output, std::move(c)));
            }
    return d;
}

FreeProtocol identity_protocol(const ProgrammableInstrument& pi, Framework f) {
    require(pi.common_output(), "resource programs need a common output dimension");
    const std::size_t ni = pi.size(), nx = pi.max_outcomes();
    const std::size_t da = total_dim(pi.input()), db = pi.instruments[0].dout();
    FreeProtocol t;
    t.framework = f;
    t.programs = ni;
    t.outcomes = nx;
    t.resource_programs = ni;
    t.resource_outcomes = nx;
    t.messages = f == Framework::Ex ? nx : 1;
    t.pre = mk(pi.input(), memory_system(pi.input(), 1), {kraus_choi(eye(da))});
    t.choose = Conditional(ni, ni);
    for (std::size_t j = 0; j < ni; ++j) t.choose(j, j) = 1.0;
    t.respond = Conditional(ni * ni * nx, nx * t.messages);
    for (std::size_t j = 0; j < ni; ++j)
        for (std::size_t i = 0; i < ni; ++i)
            for (std::size_t x = 0; x < nx; ++x) {
                const bool seen = f != Framework::Ex || i == 0;
                const std::size_t y = seen ? x : 0;
                const std::size_t k = f == Framework::Ex && seen ? x : 0;
                t.respond((j * ni + i) * nx + x, y * t.messages + k) = 1.0;
            }
    const Systems in = memory_system(pi.instruments[0].output, 1);
    const Systems& out = pi.instruments[0].output;
    const Matrix id = kraus_choi(eye(db));
    for (std::size_t k = 0; k < t.messages; ++k)
        for (std::size_t s = 0; s < t.slots(); ++s) {
            if (f != Framework::Ex) {
                t.post.push_back(mk(in, out, {id}));
                continue;
            }
            std::vector<Matrix> c(nx, zeros(db * db));
            c[s == 0 ? k : s - 1] = id;
            t.post.push_back(mk(in, out, std::move(c)));
        }
    return t;
}

// --------------------------------------------------------- witness games

GuessingGame witness_to_game(const std::vector<std::vector<Matrix>>& z, const Systems& input, const Systems& output,
                             const GameShift& shift) {
    const std::size_t dc = total_dim(input), dd = total_dim(output);
    std::vector<Instrument> ins;
    for (std::size_t j = 0; j < z.size(); ++j) {
        std::vector<Matrix> c;
        for (const auto& m : z[j]) {
            if (m.rows() != ix(dc * dd) || m.cols() != ix(dc * dd)) throw DimensionError("witness block has wrong size");
            Matrix t = m + shift.shift * eye(dc * dd);
            if (j < shift.input.size()) t += kron_plain(eye(dd), shift.input[j]);
            t /= shift.scale;
            c.push_back(herm(shift.transpose ? Matrix(t.transpose()) : t));
        }
        ins.push_back(mk(input, output, std::move(c)));
    }
    return {family_of(std::move(ins))};
}

GuessingGame witness_to_game(const std::vector<std::vector<Matrix>>& z, const Systems& input, const Systems& output,
                             GameShift* used) {
    const std::size_t dc = total_dim(input), dd = total_dim(output);
    std::size_t ny = 0;
    for (const auto& row : z) ny = std::max(ny, row.size());
    if (z.empty() || ny == 0) throw DimensionError("empty witness family");
    // Padded outcomes repeat the last block, so splitting an outcome never
    // beats the merged family.
    std::vector<std::vector<Matrix>> padded = z;
    for (auto& row : padded) row.resize(ny, row.empty() ? zeros(dc * dd) : Matrix(row.back()));
    GameShift s;
    s.transpose = true;
    double lo = std::numeric_limits<double>::infinity(), scale = 0.0;
    for (const auto& row : padded) {
        Matrix t = zeros(dc);
        for (const auto& m : row) {
            t += trace_head(herm(m), dd);
            scale = std::max(scale, m.cwiseAbs().maxCoeff());
        }
        s.input.push_back(-t / static_cast<double>(ny * dd));
        for (const auto& m : row) lo = std::min(lo, min_eigenvalue(herm(m) + kron_plain(eye(dd), s.input.back())));
    }
    s.shift = std::max(0.0, -lo);
    if (s.shift <= 1e-13 * std::max(scale, 1e-300) || scale == 0.0) {
        // Degenerate family: uniform game.
        s = GameShift{};
        s.scale = static_cast<double>(ny * dd);
        s.shift = 1.0;
        for (auto& row : padded)
            for (auto& m : row) m = zeros(dc * dd);
    } else {
        s.scale = static_cast<double>(ny * dd) * s.shift;
    }
    if (used) *used = s;
    return witness_to_game(padded, input, output, s);
}

// ---------------------------------------------------------- monotonicity

MonotonicityResult monotonicity_check(const FreeProtocol& t, const ProgrammableInstrument& pi,
                                      const GuessingGame& game, Framework f, const GameConfig& cfg, double tol) {
    require(t.framework == f, "protocol framework does not match");
    const ProgrammableInstrument image = apply_protocol(t, pi);
    GameConfig c = cfg;
    if (f == Framework::Ex) c.resource_designated = t.designated;
    const UtilityReport rep = utility(image, game, f, c);
    MonotonicityResult m;
    m.value = rep.value;
    m.replayed = evaluate(compose_protocols(rep.protocol, t), pi, game);
    m.residual = std::abs(m.value - m.replayed);
    m.holds = m.residual <= tol;
    return m;
}

// ------------------------------------------------------------- random

FreeProtocol random_protocol(Framework f, const ProtocolShape& sh, Rng& rng) {
    FreeProtocol t;
    t.framework = f;
    t.programs = sh.programs;
    t.outcomes = sh.outcomes;
    t.resource_programs = sh.resource_programs;
    t.resource_outcomes = sh.resource_outcomes;
    t.registers = sh.registers;
    t.messages = f == Framework::C ? 1 : sh.messages;
    t.memory = sh.memory;
    std::uniform_int_distribution<std::size_t> pj(0, sh.programs - 1), pi_(0, sh.resource_programs - 1);
    t.designated = pj(rng);
    t.resource_designated = pi_(rng);
    t.pre = random_instrument(sh.input, memory_system(sh.resource_input, sh.memory), sh.forward, 2, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto fill = [&](Conditional& c) {
        for (std::size_t r = 0; r < c.conditions; ++r) {
            double s = 0.0;
            for (std::size_t o = 0; o < c.outputs; ++o) s += (c(r, o) = std::pow(u(rng), 2.0));
            for (std::size_t o = 0; o < c.outputs; ++o) c(r, o) /= s;
        }
    };
    t.choose = Conditional(sh.programs * sh.forward, sh.resource_programs * sh.registers);
    fill(t.choose);
    t.respond = Conditional(sh.programs * sh.forward * sh.resource_programs * sh.registers * sh.resource_outcomes,
                            sh.outcomes * t.messages);
    fill(t.respond);
    const Systems in = memory_system(sh.resource_output, sh.memory);
    const std::size_t nz = f == Framework::Ex ? sh.outcomes : 1;
    for (std::size_t p = 0; p < sh.forward * t.messages * t.slots(); ++p)
        t.post.push_back(random_instrument(in, sh.output, nz, 2, rng));
    return t;
}

// --------------------------------------------------------------- JSON

namespace {

nlohmann::json conditional_json(const Conditional& c) {
    return {{"conditions", c.conditions}, {"outputs", c.outputs}, {"p", c.p}};
}

Conditional conditional_from(const nlohmann::json& j) {
    Conditional c(j.at("conditions").get<std::size_t>(), j.at("outputs").get<std::size_t>());
    c.p = j.at("p").get<std::vector<double>>();
    if (c.p.size() != c.conditions * c.outputs) throw ParseError("conditional: wrong number of entries");
    return c;
}

}  // namespace

nlohmann::json to_json(const FreeProtocol& t) {
    nlohmann::json post = nlohmann::json::array();
    for (const auto& e : t.post) post.push_back(to_json(e));
    return {{"framework", to_string(t.framework)},
            {"programs", t.programs},
            {"outcomes", t.outcomes},
            {"resource_programs", t.resource_programs},
            {"resource_outcomes", t.resource_outcomes},
            {"registers", t.registers},
            {"messages", t.messages},
            {"memory", t.memory},
            {"designated", t.designated},
            {"resource_designated", t.resource_designated},
            {"pre", to_json(t.pre)},
            {"choose", conditional_json(t.choose)},
            {"respond", conditional_json(t.respond)},
            {"post", post}};
}

FreeProtocol protocol_from_json(const nlohmann::json& j) {
    try {
        FreeProtocol t;
        t.framework = framework_from_string(j.at("framework").get<std::string>());
        t.programs = j.at("programs").get<std::size_t>();
        t.outcomes = j.at("outcomes").get<std::size_t>();
        t.resource_programs = j.at("resource_programs").get<std::size_t>();
        t.resource_outcomes = j.at("resource_outcomes").get<std::size_t>();
        t.registers = j.at("registers").get<std::size_t>();
        t.messages = j.at("messages").get<std::size_t>();
        t.memory = j.at("memory").get<std::size_t>();
        t.designated = j.value("designated", std::size_t{0});
        t.resource_designated = j.value("resource_designated", std::size_t{0});
        t.pre = instrument_from_json(j.at("pre"));
        t.choose = conditional_from(j.at("choose"));
        t.respond = conditional_from(j.at("respond"));
        for (const auto& e : j.at("post")) t.post.push_back(instrument_from_json(e));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("protocol: ") + e.what());
    }
}

nlohmann::json to_json(const UtilityReport& r) {
    return {{"value", r.value},
            {"framework", to_string(r.framework)},
            {"restarts", r.restarts},
            {"restart_values", r.restart_values},
            {"iterations", r.iterations},
            {"diagnostics", r.diagnostics},
            {"protocol", to_json(r.protocol)}};
}

}  // namespace qincompat
