#include <doctest.h>

#include <cmath>

#include "qincompat/compat.hpp"
#include "qincompat/fixtures.hpp"
#include "qincompat/random.hpp"

using namespace qincompat;

namespace {

const Systems kQubit{{"A", 2}};

CompatConfig quick() {
    CompatConfig cfg;
    cfg.restarts = 4;
    cfg.seesaw_iterations = 80;
    return cfg;
}

void expect_compatible(const ProgrammableInstrument& pi, const Verdict& v) {
    REQUIRE(v.status == VerdictStatus::Compatible);
    if (v.classical) {
        const double err = v.notion == Notion::Parallel ? parallel_certificate_error(pi, *v.classical)
                                                        : certificate_error(pi, *v.classical);
        CHECK(err <= 1e-7);
    }
    if (v.q) CHECK(certificate_error(pi, *v.q) <= 1e-7);
    for (const auto& c : v.no_exclusion) CHECK(certificate_error(pi, c) <= 1e-7);
}

void expect_incompatible(const Verdict& v) {
    REQUIRE(v.status == VerdictStatus::Incompatible);
    for (const auto& w : v.witnesses) CHECK(w.verify());
}

ProgrammableInstrument family(std::vector<Instrument> ins) {
    ProgrammableInstrument pi;
    for (std::size_t i = 0; i < ins.size(); ++i) pi.programs.push_back("p" + std::to_string(i));
    pi.instruments = std::move(ins);
    return pi;
}

// Depolarizing channel with visibility p on the named system.
CpMap depolarizing(const Systems& s, double p) {
    const std::size_t d = total_dim(s);
    const auto di = static_cast<Eigen::Index>(d);
    Matrix choi = (1 - p) * Matrix::Identity(di * di, di * di) / static_cast<double>(d);
    Matrix omega = Matrix::Zero(di * di, di * di);
    for (Eigen::Index m = 0; m < di; ++m)
        for (Eigen::Index n = 0; n < di; ++n) omega(m * di + m, n * di + n) = 1.0;
    choi += p * omega;
    return CpMap(s, s, choi);
}

}  // namespace

TEST_CASE("notion names round trip") {
    for (auto n : {Notion::Classical, Notion::Parallel, Notion::Q, Notion::Exclusivity})
        CHECK(notion_from_string(to_string(n)) == n);
    CHECK(notion_from_string("exclusive") == Notion::Exclusivity);
    CHECK_THROWS_AS(notion_from_string("quantum"), std::invalid_argument);
}

TEST_CASE("POVM classical compatibility") {
    SUBCASE("two copies of one POVM") {
        auto p = povm_xz(1.0)[1];
        auto v = check_povm_classical({p, p});
        expect_compatible(ProgrammableInstrument::from_povms({p, p}), v);
    }
    SUBCASE("sharp X and Z") {
        auto v = check_povm_classical(povm_xz(1.0));
        expect_incompatible(v);
        REQUIRE(v.witnesses.size() == 1);
        CHECK(v.witnesses[0].source == "classical");
        CHECK(v.witnesses[0].value > 0);
    }
    SUBCASE("X and a coarse graining of X") {
        auto x = povm_xz(1.0)[0];
        Povm trivial{x.system, {"all"}, {x.effects[0] + x.effects[1]}};
        expect_compatible(ProgrammableInstrument::from_povms({x, trivial}), check_povm_classical({x, trivial}));
    }
    SUBCASE("mismatched systems") {
        auto x = povm_xz(1.0)[0];
        Povm big{{{"A", 3}}, {"0"}, {Matrix::Identity(3, 3)}};
        CHECK_THROWS_AS(check_povm_classical({x, big}), DimensionError);
    }
}

TEST_CASE("noisy X and Z threshold by bisection") {
    double lo = 0.5, hi = 1.0;
    for (int k = 0; k < 14; ++k) {
        const double mid = 0.5 * (lo + hi);
        const auto v = check_povm_classical(povm_xz(mid));
        REQUIRE(v.status != VerdictStatus::Undecided);
        (v.status == VerdictStatus::Compatible ? lo : hi) = mid;
    }
    CHECK(std::abs(0.5 * (lo + hi) - 1.0 / std::sqrt(2.0)) < 1e-3);
}

TEST_CASE("noise monotonicity on a grid") {
    bool seen_incompatible = false;
    for (int k = 0; k <= 19; ++k) {
        const double eta = 0.5 + 0.5 * k / 19.0;
        if (std::abs(eta - 1.0 / std::sqrt(2.0)) < 5e-3) continue;
        const auto v = check_povm_classical(povm_xz(eta));
        if (seen_incompatible) CHECK(v.status == VerdictStatus::Incompatible);
        if (v.status == VerdictStatus::Incompatible) seen_incompatible = true;
        CHECK((v.status == VerdictStatus::Compatible) == (eta < 1.0 / std::sqrt(2.0)));
    }
}

TEST_CASE("instrument classical compatibility") {
    SUBCASE("classical free family") {
        auto pi = classical_free();
        expect_compatible(pi, check_instrument_classical(pi));
    }
    SUBCASE("pair of identities") {
        auto pi = pair_id();
        expect_compatible(pi, check_instrument_classical(pi));
    }
    SUBCASE("two distinct constant channels") { expect_incompatible(check_instrument_classical(pair_const())); }
    SUBCASE("differing outputs are structurally incompatible") {
        auto pi = family({Instrument::from_channel(CpMap::identity(kQubit)), povm_xz(1.0)[0].as_instrument()});
        auto v = check_instrument_classical(pi);
        CHECK(v.status == VerdictStatus::Incompatible);
        CHECK(v.witnesses.empty());
        CHECK(v.diagnostics.find("output") != std::string::npos);
    }
}

TEST_CASE("perturbation flips classical compatibility") {
    const auto id = CpMap::identity(kQubit);
    auto same = family({Instrument::from_channel(id), Instrument::from_channel(id)});
    expect_compatible(same, check_instrument_classical(same));
    for (double p : {0.9, 0.5, 0.1}) {
        auto pert = family({Instrument::from_channel(id), Instrument::from_channel(depolarizing(kQubit, p))});
        expect_incompatible(check_instrument_classical(pert));
    }
}

TEST_CASE("parallel compatibility") {
    SUBCASE("constant preparations") {
        auto pi = pair_const();
        expect_compatible(pi, check_parallel(pi));
    }
    SUBCASE("no broadcasting") { expect_incompatible(check_parallel(pair_id())); }
    SUBCASE("POVM families agree with joint measurability") {
        for (double eta : {0.6, 0.9, 1.0}) {
            auto povms = povm_xz(eta);
            auto pi = ProgrammableInstrument::from_povms(povms);
            CHECK(check_parallel(pi).status == check_povm_classical(povms).status);
        }
    }
}

TEST_CASE("q-compatibility") {
    SUBCASE("channels shortcut") {
        auto pi = channels_rand();
        auto v = check_q(pi);
        expect_compatible(pi, v);
        CHECK(v.diagnostics == "every program is a channel");
    }
    SUBCASE("classical implies q") {
        auto pi = classical_free();
        expect_compatible(pi, check_q(pi, quick()));
    }
    SUBCASE("Lueders X and Z via induced POVMs") {
        auto pi = family({lueders_x(kQubit), lueders_z(kQubit)});
        auto v = check_q(pi, quick());
        expect_incompatible(v);
        CHECK(v.witnesses.at(0).source == "q");
    }
    SUBCASE("measurement plus channel with different outputs") {
        // Z measurement with a 1-dim output and the identity channel: the
        // see-saw must route the state through C.
        auto pi = family({povm_xz(1.0)[1].as_instrument(), lueders_z(kQubit)});
        auto v = check_q(pi, quick());
        expect_compatible(pi, v);
    }
}

TEST_CASE("no-exclusion") {
    SUBCASE("identity does not exclude") {
        auto first = Instrument::from_channel(CpMap::identity(kQubit));
        for (const auto& second : {lueders_x(kQubit), lueders_z(kQubit)}) {
            auto v = excludes(first, second, quick());
            expect_compatible(family({first, second}), v);
        }
    }
    SUBCASE("Lueders instrument does not exclude itself") {
        auto l = lueders_z(kQubit);
        expect_compatible(family({l, l}), excludes(l, l, quick()));
    }
    SUBCASE("Z excludes X") { expect_incompatible(excludes(lueders_z(kQubit), lueders_x(kQubit), quick())); }
}

TEST_CASE("family exclusivity") {
    SUBCASE("triple is non-exclusive") {
        auto pi = triple_excl();
        expect_compatible(pi, check_exclusive(pi, quick()));
    }
    SUBCASE("two copies of a channel") {
        auto ch = Instrument::from_channel(depolarizing(kQubit, 0.7));
        auto pi = family({ch, ch});
        expect_compatible(pi, check_exclusive(pi, quick()));
    }
    SUBCASE("Lueders X and Z are exclusive, also fully") {
        auto pi = family({lueders_x(kQubit), lueders_z(kQubit)});
        expect_incompatible(check_exclusive(pi, quick()));
        expect_incompatible(check_exclusive(pi, quick(), true));
    }
    SUBCASE("per-pair mode") {
        auto cfg = quick();
        cfg.per_pair = true;
        auto pi = triple_excl();
        auto v = check_exclusive(pi, cfg);
        expect_compatible(pi, v);
        CHECK(v.no_exclusion.size() == 2);
    }
    SUBCASE("single program rejected") {
        CHECK_THROWS_AS(check_exclusive(family({lueders_x(kQubit)})), std::invalid_argument);
    }
}

TEST_CASE("hand-built no-exclusion certificate for a Lueders instrument") {
    // Measure once, keep the post-measurement state in C = A and copy the
    // outcome classically; recovery repeats the outcome with the identity.
    const auto l = lueders_z(kQubit);
    const Systems c{{"C", 2}};
    NoExclusionCertificate cert;
    cert.first = 0;
    cert.targets = {1};
    cert.mother = l;
    cert.mother.output = c;
    cert.mu = StochasticMatrix(2, 2, 1);
    const CpMap id(c, kQubit, CpMap::identity(kQubit).choi);
    for (std::size_t w = 0; w < 2; ++w) {
        cert.mu(w, w, 0) = 1.0;
        cert.post.push_back(id);
        cert.post.push_back(id);
        Instrument k = l;
        k.input = c;
        const CpMap zero = CpMap::zero(c, kQubit);
        k.chois = {w == 0 ? id.choi : zero.choi, w == 1 ? id.choi : zero.choi};
        cert.recovery.resize(1);
        cert.recovery[0].push_back(k);
    }
    const auto pi = family({l, l});
    CHECK(certificate_error(pi, cert) < 1e-12);
    // Breaking the classical copy breaks the certificate.
    std::swap(cert.recovery[0][0], cert.recovery[0][1]);
    CHECK(certificate_error(pi, cert) > 0.5);
}

TEST_CASE("witness blocks reproduce the witness value") {
    const auto povms = povm_xz(1.0);
    const auto pi = ProgrammableInstrument::from_povms(povms);
    const auto v = check_povm_classical(povms);
    REQUIRE(v.status == VerdictStatus::Incompatible);
    const auto z = witness_blocks(v.witnesses[0], pi);
    double total = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i)
        for (std::size_t x = 0; x < pi.instruments[i].size(); ++x)
            total += (z[i][x] * pi.instruments[i].chois[x]).trace().real();
    CHECK(total == doctest::Approx(v.witnesses[0].value).epsilon(1e-9));
    CHECK(v.witnesses[0].value == doctest::Approx(witness_value(v.witnesses[0].problem, v.witnesses[0].witness)));
}

TEST_CASE("hierarchy rows of the fixtures") {
    const auto cfg = quick();
    SUBCASE("classical free family") {
        auto r = hierarchy_report(classical_free(), cfg);
        CHECK(r.classical->status == VerdictStatus::Compatible);
        CHECK(r.q->status == VerdictStatus::Compatible);
        CHECK(r.non_exclusive->status == VerdictStatus::Compatible);
    }
    SUBCASE("pair of identities") {
        auto r = hierarchy_report(pair_id(), cfg);
        CHECK(r.classical->status == VerdictStatus::Compatible);
        CHECK(r.parallel->status == VerdictStatus::Incompatible);
        CHECK(r.q->status == VerdictStatus::Compatible);
    }
    SUBCASE("pair of constant channels") {
        auto r = hierarchy_report(pair_const(), cfg);
        CHECK(r.classical->status == VerdictStatus::Incompatible);
        CHECK(r.parallel->status == VerdictStatus::Compatible);
        CHECK(r.q->status == VerdictStatus::Compatible);
    }
    SUBCASE("triple") {
        auto r = hierarchy_report(triple_excl(), cfg);
        CHECK(r.non_exclusive->status == VerdictStatus::Compatible);
        CHECK(r.q->status != VerdictStatus::Compatible);
    }
    SUBCASE("sharp X and Z as POVMs") {
        auto r = hierarchy_report(ProgrammableInstrument::from_povms(povm_xz(1.0)), cfg);
        CHECK(r.povm_family);
        CHECK(r.classical->status == VerdictStatus::Incompatible);
        CHECK(r.parallel->status == VerdictStatus::Incompatible);
        CHECK(r.q->status == VerdictStatus::Incompatible);
    }
}

TEST_CASE("contradictory reports are rejected") {
    Verdict yes, no;
    yes.status = VerdictStatus::Compatible;
    no.status = VerdictStatus::Incompatible;
    HierarchyReport r;
    r.classical = yes;
    r.q = no;
    CHECK_THROWS_WITH_AS(check_implications(r), "violated implication: classical => q", ImplicationError);
    r.q = yes;
    r.non_exclusive = no;
    CHECK_THROWS_AS(check_implications(r), ImplicationError);
    r.non_exclusive.reset();
    r.q->status = VerdictStatus::Undecided;
    CHECK_NOTHROW(check_implications(r));
}

TEST_CASE("implication chain on random families") {
    Rng rng(2024);
    auto cfg = quick();
    cfg.restarts = 2;
    cfg.seesaw_iterations = 40;
    cfg.solver.max_iter = 8000;
    std::size_t decided = 0;
    for (int k = 0; k < 40; ++k) {
        std::uniform_int_distribution<int> outcomes(1, 3), kraus(1, 2);
        ProgrammableInstrument pi;
        for (int i = 0; i < 2; ++i) {
            pi.programs.push_back("p" + std::to_string(i));
            pi.instruments.push_back(random_instrument(kQubit, {{"B", 2}}, static_cast<std::size_t>(outcomes(rng)),
                                                       static_cast<std::size_t>(kraus(rng)), rng));
        }
        HierarchyReport r;
        REQUIRE_NOTHROW(r = hierarchy_report(pi, cfg));
        for (const auto* v : {&r.classical, &r.parallel, &r.q, &r.non_exclusive}) {
            if (!*v) continue;
            if ((*v)->status != VerdictStatus::Undecided) ++decided;
            for (const auto& w : (*v)->witnesses) CHECK(w.verify());
        }
        if (r.q->q) CHECK(certificate_error(pi, *r.q->q) <= 1e-7);
        for (const auto& c : r.non_exclusive->no_exclusion) CHECK(certificate_error(pi, c) <= 1e-7);
    }
    MESSAGE("decided verdicts: " << decided << " of 160");
    CHECK(decided > 110);
}

TEST_CASE("POVM families collapse the notions") {
    Rng rng(99);
    for (int k = 0; k < 30; ++k) {
        std::vector<Povm> povms;
        for (int i = 0; i < 2; ++i) {
            auto ins = random_instrument(kQubit, {{"T", 1}}, 2, 2, rng);
            povms.push_back(induced_povm(ins));
        }
        // Sharpen toward extremal effects so both verdicts occur.
        if (k % 2 == 0) povms = povm_xz(0.55 + 0.015 * k);
        const auto pi = ProgrammableInstrument::from_povms(povms);
        const auto base = check_povm_classical(povms).status;
        CHECK(check_instrument_classical(pi).status == base);
        CHECK(check_parallel(pi).status == base);
        CHECK(check_q(pi, quick()).status == base);
    }
}

TEST_CASE("verdict json") {
    auto v = check_povm_classical(povm_xz(1.0));
    auto j = to_json(v);
    CHECK(j["status"] == "Incompatible");
    CHECK(j["notion"] == "classical");
    CHECK(j["witness"].size() == 1);
    auto pi = pair_id();
    auto jc = to_json(check_q(pi));
    CHECK(jc["certificate"]["kind"] == "q");
}
