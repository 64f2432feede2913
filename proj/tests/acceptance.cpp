// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "qincompat/compat.hpp"
#include "qincompat/fixtures.hpp"
#include "qincompat/games.hpp"
#include "qincompat/random.hpp"

using namespace qincompat;

namespace {

const Systems kA{{"A", 2}};
const Systems kB{{"B", 2}};

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ProgrammableInstrument family(std::vector<Instrument> ins) {
    ProgrammableInstrument pi;
    for (std::size_t i = 0; i < ins.size(); ++i) pi.programs.push_back("p" + std::to_string(i));
    pi.instruments = std::move(ins);
    return pi;
}

ProgrammableInstrument random_family(std::size_t programs, std::size_t outcomes, Rng& rng) {
    std::vector<Instrument> ins;
    for (std::size_t j = 0; j < programs; ++j) ins.push_back(random_instrument(kA, kB, outcomes, 2, rng));
    return family(std::move(ins));
}

ProgrammableInstrument random_classical_free(Rng& rng) {
    return post_process_classical(random_instrument(kA, kB, 3, 2, rng), random_stochastic(2, 3, 2, rng));
}

bool is(const std::optional<Verdict>& v, VerdictStatus s) { return v && v->status == s; }

// Verdicts collected for the soundness criteria.
struct Collected {
    ProgrammableInstrument target;
    Verdict verdict;
};
std::vector<Collected> g_verdicts;

void collect(const ProgrammableInstrument& pi, const HierarchyReport& r) {
    for (const auto* v : {&r.classical, &r.parallel, &r.q, &r.non_exclusive})
        if (*v) g_verdicts.push_back({pi, **v});
}

// ---------------------------------------------------------------- criteria

Outcome hierarchy_table() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto f = fixtures(1.0);
    std::ostringstream d;
    bool ok = true;
    auto expect = [&](const std::string& name, const char* notion, const std::optional<Verdict>& v, bool want) {
        if (!is(v, want ? VerdictStatus::Compatible : VerdictStatus::Incompatible)) {
            ok = false;
            d << name << " " << notion << " expected " << (want ? "✓" : "✗") << "; ";
        }
    };
    CompatConfig cfg;
    auto run = [&](const std::string& name) {
        const auto r = hierarchy_report(f.at(name), cfg);
        collect(f.at(name), r);
        return r;
    };
    const auto pid = run("PAIR_ID");
    expect("PAIR_ID", "classical", pid.classical, true);
    expect("PAIR_ID", "parallel", pid.parallel, false);
    expect("PAIR_ID", "q", pid.q, true);
    const auto pc = run("PAIR_CONST");
    expect("PAIR_CONST", "classical", pc.classical, false);
    expect("PAIR_CONST", "parallel", pc.parallel, true);
    expect("PAIR_CONST", "q", pc.q, true);
    const auto cr = run("CHANNELS_RAND");
    expect("CHANNELS_RAND", "q", cr.q, true);
    expect("CHANNELS_RAND", "classical", cr.classical, false);
    const auto te = run("TRIPLE_EXCL");
    expect("TRIPLE_EXCL", "non-exclusive", te.non_exclusive, true);
    if (is(te.q, VerdictStatus::Compatible)) {
        ok = false;
        d << "TRIPLE_EXCL q must never be ✓; ";
    }
    const auto cf = run("CLASSICAL_FREE");
    expect("CLASSICAL_FREE", "classical", cf.classical, true);
    expect("CLASSICAL_FREE", "parallel", cf.parallel, true);
    expect("CLASSICAL_FREE", "q", cf.q, true);
    expect("CLASSICAL_FREE", "non-exclusive", cf.non_exclusive, true);
    collect(f.at("POVM_XZ"), hierarchy_report(f.at("POVM_XZ"), cfg));
    const double secs = seconds_since(t0);
    if (secs > 60.0) ok = false;
    d << "TRIPLE_EXCL q " << (te.q ? to_string(te.q->status) : "-") << ", " << secs << " s";
    return {ok, d.str()};
}

Outcome povm_threshold() {
    const auto t0 = std::chrono::steady_clock::now();
    CompatConfig cfg;
    std::size_t undecided = 0;
    auto compatible = [&](double eta) {
        const Verdict v = check_povm_classical(povm_xz(eta), cfg);
        if (v.status == VerdictStatus::Undecided) ++undecided;
        return v.status == VerdictStatus::Compatible;
    };
    double lo = 0.5, hi = 1.0;
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        (compatible(mid) ? lo : hi) = mid;
    }
    const double bisected = 0.5 * (lo + hi);
    // Independent grid at step 1e-4: last compatible visibility.
    double grid = 0.0;
    for (int k = 0; k <= 200; ++k) {
        const double eta = 0.6971 + 1e-4 * k;
        if (compatible(eta)) grid = eta;
    }
    const double secs = seconds_since(t0);
    const bool ok = std::abs(bisected - 1.0 / std::sqrt(2.0)) <= 1e-3 && std::abs(grid - bisected) <= 1e-4 &&
                    secs <= 120.0;
    std::ostringstream d;
    d.precision(7);
    d << "eta* = " << bisected << " (grid " << grid << ", undecided " << undecided << ", " << secs << " s)";
    return {ok, d.str()};
}

void collect_random_verdicts() {
    Rng rng(2024);
    CompatConfig cfg;
    for (int trial = 0; trial < 12; ++trial) {
        const auto pi = trial % 3 == 0 ? random_classical_free(rng) : random_family(2, 2, rng);
        for (Notion n : {Notion::Classical, Notion::Parallel, Notion::Q, Notion::Exclusivity})
            g_verdicts.push_back({pi, check(n, pi, cfg)});
    }
}

Outcome witness_soundness() {
    Rng rng(99);
    std::size_t witnesses = 0, incompatible = 0, samples = 0, violations = 0, family_samples = 0;
    double worst = -1.0;
    bool ok = true;
    for (const auto& c : g_verdicts) {
        if (c.verdict.status != VerdictStatus::Incompatible) continue;
        ++incompatible;
        if (c.verdict.witnesses.empty()) {
            // Structural verdicts (e.g. mismatched dimensions) carry no functional.
            continue;
        }
        for (const auto& w : c.verdict.witnesses) {
            ++witnesses;
            if (!verify_witness(w.problem, w.witness)) ok = false;
            const auto s = witness_operator(w.problem, w.witness);
            for (int k = 0; k < 1000; ++k, ++samples) {
                double v = 0.0, norm = 0.0;
                for (const auto& b : s) {
                    const Matrix x = random_psd(static_cast<std::size_t>(b.rows()), rng);
                    v += (b.adjoint() * x).trace().real();
                    norm += x.trace().real();
                }
                worst = std::max(worst, v / norm);
                if (v > 1e-9 * norm) ++violations;
            }
            if (c.verdict.notion != Notion::Classical) continue;
            // Free families stay on the far side of the separating functional.
            const auto z = witness_blocks(w, c.target);
            double target = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i)
                for (std::size_t x = 0; x < z[i].size(); ++x)
                    target += (z[i][x].adjoint() * c.target.instruments[i].chois[x]).trace().real();
            std::size_t outcomes = 1;
            for (const auto& ins : c.target.instruments) outcomes *= ins.size();
            for (int k = 0; k < 200; ++k, ++family_samples) {
                const Instrument mother = random_instrument(c.target.input(), c.target.instruments[0].output,
                                                            outcomes, 2, rng);
                StochasticMatrix mu = random_stochastic(c.target.max_outcomes(), outcomes, c.target.size(), rng);
                // Programs with fewer outcomes keep their own alphabet.
                for (std::size_t i = 0; i < c.target.size(); ++i)
                    for (std::size_t m = 0; m < outcomes; ++m)
                        for (std::size_t x = c.target.instruments[i].size(); x < c.target.max_outcomes(); ++x) {
                            mu(0, m, i) += mu(x, m, i);
                            mu(x, m, i) = 0.0;
                        }
                const auto free = post_process_classical(mother, mu);
                double v = 0.0;
                for (std::size_t i = 0; i < z.size(); ++i)
                    for (std::size_t x = 0; x < z[i].size() && x < free.instruments[i].size(); ++x)
                        v += (z[i][x].adjoint() * free.instruments[i].chois[x]).trace().real();
                if (target - v < w.value - 1e-7) ++violations;
            }
        }
    }
    if (violations > 0 || witnesses == 0) ok = false;
    std::ostringstream d;
    d << witnesses << " witnesses from " << incompatible << " incompatible verdicts, " << samples
      << " PSD samples (max <S,X>/Tr X = " << worst << "), " << family_samples << " free families, " << violations
      << " violations";
    return {ok, d.str()};
}

Outcome certificate_soundness() {
    std::size_t checked = 0, bad = 0;
    double worst = 0.0;
    for (const auto& c : g_verdicts) {
        if (c.verdict.status != VerdictStatus::Compatible) continue;
        std::vector<double> errs;
        if (c.verdict.classical)
            errs.push_back(c.verdict.notion == Notion::Parallel ? parallel_certificate_error(c.target, *c.verdict.classical)
                                                                : certificate_error(c.target, *c.verdict.classical));
        if (c.verdict.q) errs.push_back(certificate_error(c.target, *c.verdict.q));
        for (const auto& n : c.verdict.no_exclusion) errs.push_back(certificate_error(c.target, n));
        if (errs.empty()) ++bad;
        for (double e : errs) {
            ++checked;
            worst = std::max(worst, e);
            if (!(e <= 1e-7)) ++bad;
        }
    }
    std::ostringstream d;
    d << checked << " certificates, worst error " << worst << ", " << bad << " failures";
    return {bad == 0 && checked > 0, d.str()};
}

Outcome monotonicity() {
    Rng rng(5);
    GameConfig cfg;
    cfg.restarts = 1;
    cfg.iterations = 4;
    cfg.qp_iterations = 300;
    std::size_t passed = 0, total = 0;
    double worst = 0.0;
    for (Framework f : {Framework::C, Framework::Q, Framework::Ex})
        for (int k = 0; k < 50; ++k, ++total) {
            const GuessingGame game{random_family(2, 2, rng)};
            const auto pi = random_family(2, 2, rng);
            const auto t = random_protocol(f, ProtocolShape{}, rng);
            cfg.seed = static_cast<std::uint64_t>(k);
            const auto m = monotonicity_check(t, pi, game, f, cfg, 1e-8);
            worst = std::max(worst, m.residual);
            if (m.holds) ++passed;
        }
    std::ostringstream d;
    d << passed << "/" << total << " triples, worst residual " << worst;
    return {passed == total, d.str()};
}

Outcome free_equivalence() {
    Rng rng(8);
    GameConfig cfg;
    cfg.restarts = 2;
    cfg.iterations = 25;
    cfg.qp_iterations = 1500;
    std::vector<ProgrammableInstrument> resources;
    for (int k = 0; k < 5; ++k) resources.push_back(random_classical_free(rng));
    double spread = 0.0, excess = -1.0, replay = 0.0;
    bool ok = true;
    for (int g = 0; g < 5; ++g) {
        const GuessingGame game{random_family(2, 2, rng)};
        const auto star = free_threshold(game, Framework::C, cfg);
        std::vector<double> values;
        for (const auto& f : resources) {
            const double discard = evaluate(discard_resource(star.protocol, f), f, game);
            const auto seesaw = utility(f, game, Framework::C, cfg);
            // The best family found on f is also produced from nothing.
            const auto sim = simulate_free(Framework::C, f);
            const double via_sim = evaluate(compose_protocols(seesaw.protocol, sim), trivial_resource(), game);
            replay = std::max(replay, std::abs(via_sim - seesaw.value));
            excess = std::max(excess, seesaw.value - star.value);
            values.push_back(std::max(discard, seesaw.value));
        }
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        spread = std::max(spread, *hi - *lo);
    }
    if (spread > 1e-6 || excess > 1e-6 || replay > 1e-6) ok = false;
    std::ostringstream d;
    d << "max pairwise spread " << spread << ", see-saw excess over threshold " << excess
      << ", trivial-resource replay error " << replay;
    return {ok, d.str()};
}

// Witness game from `target`'s incompatibility under `notion`.
struct WitnessGame {
    GuessingGame game;
    double margin = 0.0;
    bool ok = false;
};

WitnessGame witness_game(const ProgrammableInstrument& target, Notion notion) {
    CompatConfig cfg;
    const Verdict v = check(notion, target, cfg);
    WitnessGame w;
    if (v.status != VerdictStatus::Incompatible || v.witnesses.empty() || !v.witnesses[0].verify()) return w;
    GameShift used;
    w.game = witness_to_game(witness_blocks(v.witnesses[0], target), target.input(), target.instruments[0].output,
                             &used);
    const double n = static_cast<double>(target.size() * total_dim(target.input()) *
                                         target.instruments[0].dout());
    w.margin = v.witnesses[0].value / (used.scale * n);
    w.ok = true;
    return w;
}

Outcome threshold_ordering() {
    Rng rng(11);
    double worst = -1.0;
    for (int k = 0; k < 10; ++k) {
        const GuessingGame game{random_family(2, 2, rng)};
        const double c = free_threshold(game, Framework::C).value;
        const double q = free_threshold(game, Framework::Q).value;
        const double ex = free_threshold(game, Framework::Ex).value;
        worst = std::max({worst, c - q, q - ex});
    }
    std::ostringstream d;
    d.precision(6);
    d << "max violation " << worst;
    bool ok = worst <= 1e-7;

    // c < q on the game refuting classical compatibility of a q-free family.
    const auto cq = witness_game(channels_rand(), Notion::Classical);
    if (cq.ok) {
        const double c = free_threshold(cq.game, Framework::C).value;
        const double q = std::max(free_threshold(cq.game, Framework::Q).value, score(channels_rand(), cq.game));
        d << "; c/q gap " << q - c << " (certified >= " << cq.margin << ")";
        ok = ok && q - c > 1e-4 && cq.margin > 1e-4;
    } else {
        d << "; no classical witness for CHANNELS_RAND";
        ok = false;
    }
    // q < ex on the game refuting q-compatibility of a non-exclusive family.
    const auto qe = witness_game(triple_excl(), Notion::Q);
    if (qe.ok) {
        const double q = free_threshold(qe.game, Framework::Q).value;
        const double ex = std::max(free_threshold(qe.game, Framework::Ex).value, score(triple_excl(), qe.game));
        d << "; q/ex gap " << ex - q << " (certified >= " << qe.margin << ")";
        ok = ok && ex - q > 1e-4 && qe.margin > 1e-4;
    } else {
        d << "; no q witness for TRIPLE_EXCL";
        ok = false;
    }
    return {ok, d.str()};
}

Outcome witness_pipeline() {
    const auto target = pair_const();
    const auto w = witness_game(target, Notion::Classical);
    if (!w.ok) return {false, "no verified classical witness for PAIR_CONST"};
    GameConfig cfg;
    cfg.restarts = 4;
    const double u = std::max(utility(target, w.game, Framework::C, cfg).value, score(target, w.game));
    const double star = free_threshold(w.game, Framework::C).value;
    const double gap = u - star;
    std::ostringstream d;
    d << "utility " << u << ", threshold " << star << ", gap " << gap << ", margin " << w.margin;
    return {gap >= 0.5 * w.margin && gap <= 2.0 * w.margin, d.str()};
}

Outcome numerical_substrate() {
    Rng rng(13);
    double worst = 0.0;
    auto track = [&](double e) { worst = std::max(worst, e); };
    const Systems ab{{"A", 2}, {"B", 3}};
    for (int k = 0; k < 20; ++k) {
        // Partial trace is linear.
        const HermitianBlock x(ab, random_hermitian(6, rng)), y(ab, random_hermitian(6, rng));
        const cplx a(0.3, -1.2);
        const auto lhs = partial_trace(x + a * y, {"B"});
        const auto rhs = partial_trace(x, {"B"}) + a * partial_trace(y, {"B"});
        track((lhs.matrix() - rhs.matrix()).cwiseAbs().maxCoeff());
        // PSD projection is idempotent.
        const Matrix p = project_psd(random_hermitian(5, rng));
        track((project_psd(p) - p).cwiseAbs().maxCoeff());
        // Channels preserve trace.
        const CpMap phi = random_channel(kA, kB, 3, rng);
        const Matrix rho = random_density(2, rng);
        track(std::abs(qincompat::apply(phi, rho).trace() - 1.0));
        // Choi composition against the action on all d^2 matrix units.
        const CpMap psi = random_channel(kB, {{"C", 3}}, 2, rng);
        const CpMap both = compose(psi, phi);
        for (Eigen::Index m = 0; m < 2; ++m)
            for (Eigen::Index n = 0; n < 2; ++n) {
                Matrix e = Matrix::Zero(2, 2);
                e(m, n) = 1.0;
                track((qincompat::apply(both, e) - qincompat::apply(psi, qincompat::apply(phi, e))).cwiseAbs().maxCoeff());
            }
    }
    std::ostringstream d;
    d << "worst deviation " << worst;
    return {worst <= 1e-10, d.str()};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"hierarchy table", hierarchy_table},
        {"POVM incompatibility threshold", povm_threshold},
        {"witness soundness",
         [] {
             collect_random_verdicts();
             return witness_soundness();
         }},
        {"certificate soundness", certificate_soundness},
        {"monotone property", monotonicity},
        {"free-resource equivalence", free_equivalence},
        {"threshold ordering", threshold_ordering},
        {"witness-to-game pipeline", witness_pipeline},
        {"numerical substrate", numerical_substrate},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
