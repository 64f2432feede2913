#include <doctest.h>

#include <cmath>

#include "qincompat/compat.hpp"
#include "qincompat/fixtures.hpp"
#include "qincompat/games.hpp"
#include "qincompat/json_io.hpp"
#include "qincompat/random.hpp"

using namespace qincompat;

namespace {

const Systems kA{{"A", 2}};
const Systems kB{{"B", 2}};
const Framework kAll[] = {Framework::C, Framework::Q, Framework::Ex};

ProgrammableInstrument family(std::vector<Instrument> ins) {
    ProgrammableInstrument pi;
    for (std::size_t i = 0; i < ins.size(); ++i) pi.programs.push_back("p" + std::to_string(i));
    pi.instruments = std::move(ins);
    return pi;
}

// Weighted Choi combination of two families with the same layout.
ProgrammableInstrument combine(const ProgrammableInstrument& a, const ProgrammableInstrument& b, double p) {
    ProgrammableInstrument out = a;
    for (std::size_t j = 0; j < a.size(); ++j)
        for (std::size_t y = 0; y < a.instruments[j].size(); ++y)
            out.instruments[j].chois[y] = p * a.instruments[j].chois[y] + (1.0 - p) * b.instruments[j].chois[y];
    return out;
}

ProgrammableInstrument random_family(std::size_t programs, std::size_t outcomes, Rng& rng) {
    std::vector<Instrument> ins;
    for (std::size_t j = 0; j < programs; ++j) ins.push_back(random_instrument(kA, kB, outcomes, 2, rng));
    return family(std::move(ins));
}

GuessingGame unitary_pair_game() {
    Matrix x = Matrix::Zero(2, 2);
    x(0, 1) = x(1, 0) = 1.0;
    const Systems out{{"B", 2}};
    return {family({Instrument::from_channel(CpMap::from_kraus(kA, out, {Matrix::Identity(2, 2)})),
                    Instrument::from_channel(CpMap::from_kraus(kA, out, {x}))})};
}

GameConfig fast() {
    GameConfig cfg;
    cfg.restarts = 3;
    cfg.iterations = 30;
    cfg.qp_iterations = 1500;
    return cfg;
}

}  // namespace

TEST_CASE("identity game scores one on the identity pair") {
    const GuessingGame game{pair_id()};
    CHECK(score(pair_id(), game) == doctest::Approx(1.0).epsilon(1e-12));
    for (auto f : kAll) {
        const auto rep = utility(pair_id(), game, f, fast());
        CHECK(rep.value == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(evaluate(rep.protocol, pair_id(), game) == doctest::Approx(rep.value).epsilon(1e-12));
    }
}

TEST_CASE("identity protocol leaves families unchanged") {
    Rng rng(3);
    for (auto f : kAll)
        for (const auto& pi : {pair_id(), triple_excl(), random_family(2, 3, rng)}) {
            const auto t = identity_protocol(pi, f);
            CHECK_NOTHROW(t.check());
            CHECK(family_distance(apply_protocol(t, pi), pi) <= 1e-10);
        }
}

TEST_CASE("composition matches sequential application") {
    Rng rng(17);
    for (auto f : kAll)
        for (int trial = 0; trial < 4; ++trial) {
            ProtocolShape inner_shape;
            inner_shape.resource_outcomes = 2;
            inner_shape.outcomes = 3;
            ProtocolShape outer_shape;
            outer_shape.resource_programs = inner_shape.programs;
            outer_shape.resource_outcomes = inner_shape.outcomes;
            outer_shape.resource_input = inner_shape.input;
            outer_shape.resource_output = inner_shape.output;
            outer_shape.input = {{"E", 2}};
            outer_shape.output = {{"F", 2}};
            const auto inner = random_protocol(f, inner_shape, rng);
            auto outer = random_protocol(f, outer_shape, rng);
            outer.resource_designated = inner.designated;
            const auto pi = random_family(2, 2, rng);
            const auto seq = apply_protocol(outer, apply_protocol(inner, pi));
            const auto composed = compose_protocols(outer, inner);
            CHECK_NOTHROW(composed.check());
            CHECK(family_distance(apply_protocol(composed, pi), seq) <= 1e-9);
        }
}

TEST_CASE("mixtures act linearly") {
    Rng rng(23);
    for (auto f : kAll) {
        ProtocolShape shape;
        const auto a = random_protocol(f, shape, rng);
        auto b = random_protocol(f, shape, rng);
        b.designated = a.designated;
        b.resource_designated = a.resource_designated;
        const auto pi = random_family(2, 2, rng);
        const auto mixed = apply_protocol(mix_protocols(a, b, 0.3), pi);
        CHECK(family_distance(mixed, combine(apply_protocol(a, pi), apply_protocol(b, pi), 0.3)) <= 1e-10);
    }
}

TEST_CASE("embedding preserves the transformation") {
    Rng rng(29);
    ProtocolShape shape;
    shape.resource_programs = 1;
    const auto pi = family({random_instrument(kA, kB, 2, 2, rng)});
    const auto c = random_protocol(Framework::C, shape, rng);
    const auto q = random_protocol(Framework::Q, shape, rng);
    CHECK(family_distance(apply_protocol(embed(c, Framework::Q), pi), apply_protocol(c, pi)) <= 1e-10);
    CHECK(family_distance(apply_protocol(embed(c, Framework::Ex), pi), apply_protocol(c, pi)) <= 1e-10);
    CHECK(family_distance(apply_protocol(embed(q, Framework::Ex), pi), apply_protocol(q, pi)) <= 1e-10);
    CHECK_THROWS_AS(embed(q, Framework::C), ProtocolError);
}

TEST_CASE("free families are reproduced from the trivial resource") {
    const auto trivial = trivial_resource();
    const auto cf = classical_free();
    CHECK(family_distance(apply_protocol(simulate_free(Framework::C, cf), trivial), cf) <= 1e-8);

    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const Instrument mother = random_instrument(kA, kB, 3, 2, rng);
        const auto pi = post_process_classical(mother, random_stochastic(2, 3, 2, rng));
        for (auto f : kAll) {
            const auto t = simulate_free(f, pi);
            CHECK(t.framework == f);
            CHECK(family_distance(apply_protocol(t, trivial), pi) <= 1e-6);
        }
    }

    const auto channels = channels_rand();
    const auto tq = simulate_free(Framework::Q, channels);
    CHECK(family_distance(apply_protocol(tq, trivial), channels) <= 1e-6);
    const auto tex = simulate_free(Framework::Ex, triple_excl());
    CHECK(family_distance(apply_protocol(tex, trivial), triple_excl()) <= 1e-6);
    CHECK_THROWS_AS(simulate_free(Framework::C, triple_excl()), ProtocolError);
}

TEST_CASE("thresholds on games with known values") {
    const auto pair = unitary_pair_game();
    CHECK(free_threshold(pair, Framework::C).value == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(free_threshold(pair, Framework::Q).value == doctest::Approx(1.0).epsilon(1e-6));

    // Guessing sharp X and Z outcomes: jointly measurable families reach
    // (1 + 1/sqrt 2)/2 and no more.
    const GuessingGame xz{ProgrammableInstrument::from_povms(povm_xz(1.0))};
    const double star = 0.5 * (1.0 + 1.0 / std::sqrt(2.0));
    for (auto f : kAll) CHECK(free_threshold(xz, f).value == doctest::Approx(star).epsilon(1e-5));
    for (double eta : {0.6, 0.9}) {
        const auto noisy = ProgrammableInstrument::from_povms(povm_xz(eta));
        CHECK(score(noisy, xz) == doctest::Approx(0.5 * (1.0 + eta)).epsilon(1e-12));
    }

    const GuessingGame excl{triple_excl()};
    const double uq = free_threshold(excl, Framework::Q).value;
    const double uex = free_threshold(excl, Framework::Ex).value;
    CHECK(score(triple_excl(), excl) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(uex == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(uq < uex - 1e-3);
}

TEST_CASE("thresholds are ordered and invariant under program relabelling") {
    Rng rng(37);
    for (int trial = 0; trial < 4; ++trial) {
        const GuessingGame game{random_family(2, 2, rng)};
        const double c = free_threshold(game, Framework::C).value;
        const double q = free_threshold(game, Framework::Q).value;
        const double ex = free_threshold(game, Framework::Ex).value;
        CHECK(c <= q + 1e-7);
        CHECK(q <= ex + 1e-7);
        GuessingGame swapped = game;
        std::swap(swapped.referee.instruments[0], swapped.referee.instruments[1]);
        for (auto f : kAll)
            CHECK(free_threshold(swapped, f).value ==
                  doctest::Approx(free_threshold(game, f).value).epsilon(1e-6));
    }
}

TEST_CASE("threshold protocols are free and attain their value") {
    const auto trivial = trivial_resource();
    const auto game = unitary_pair_game();
    for (auto f : kAll) {
        const auto rep = free_threshold(game, f);
        CHECK_NOTHROW(rep.protocol.check(1e-7));
        CHECK(evaluate(rep.protocol, trivial, game) == doctest::Approx(rep.value).epsilon(1e-12));
    }
}

TEST_CASE("witness games") {
    // A valid referee is a fixed point of the explicit map.
    const GuessingGame g{triple_excl()};
    std::vector<std::vector<Matrix>> z;
    for (const auto& ins : g.referee.instruments) z.push_back(ins.chois);
    const auto back = witness_to_game(z, kA, kA, GameShift{});
    CHECK(family_distance(back.referee, g.referee) <= 1e-14);

    // Incompatibility witnesses become valid games separating the resource.
    CompatConfig cfg;
    cfg.restarts = 0;
    const auto target = pair_const();
    const Verdict v = check(Notion::Classical, target, cfg);
    REQUIRE(v.status == VerdictStatus::Incompatible);
    REQUIRE(!v.witnesses.empty());
    const auto blocks = witness_blocks(v.witnesses[0], target);
    GameShift used;
    const auto game = witness_to_game(blocks, target.input(), target.instruments[0].output, &used);
    CHECK(validate(game.referee, 1e-9));
    const double margin = v.witnesses[0].value / (used.scale * 2.0 * 2.0 * 2.0);
    const double gap = score(target, game) - free_threshold(game, Framework::C).value;
    CHECK(gap >= margin - 1e-7);

    // Padded alphabets: TRIPLE_EXCL's first program has a single outcome.
    const auto excl = triple_excl();
    const Verdict vq = check(Notion::Q, excl, cfg);
    REQUIRE(vq.status == VerdictStatus::Incompatible);
    const auto qgame = witness_to_game(witness_blocks(vq.witnesses[0], excl), kA, kA, &used);
    const double qmargin = vq.witnesses[0].value / (used.scale * 3.0 * 2.0 * 2.0);
    CHECK(score(excl, qgame) - free_threshold(qgame, Framework::Q).value >= qmargin - 1e-7);

    const auto uniform = witness_to_game({{Matrix::Zero(4, 4), Matrix::Zero(4, 4)}}, kA, kB);
    CHECK(validate(uniform.referee, 1e-12));
}

TEST_CASE("utility is monotone under free protocols") {
    Rng rng(41);
    const GuessingGame game{random_family(2, 2, rng)};
    GameConfig cfg = fast();
    cfg.restarts = 2;
    for (auto f : kAll) {
        const auto pi = random_family(2, 2, rng);
        const auto t = random_protocol(f, ProtocolShape{}, rng);
        const auto m = monotonicity_check(t, pi, game, f, cfg);
        CHECK(m.holds);
        const double before = utility(pi, game, f, cfg).value;
        MESSAGE("framework " << to_string(f) << ": before " << before << ", after " << m.value);
    }
}

TEST_CASE("utility exceeds the threshold for incompatible pairs") {
    const auto pair = unitary_pair_game();
    const auto u = utility(pair_id(), pair, Framework::C, fast());
    CHECK(u.value >= free_threshold(pair, Framework::C).value - 1e-7);
}

TEST_CASE("protocols round-trip through JSON") {
    Rng rng(43);
    for (auto f : kAll) {
        const auto t = random_protocol(f, ProtocolShape{}, rng);
        const auto back = protocol_from_json(to_json(t));
        const auto pi = random_family(2, 2, rng);
        CHECK(family_distance(apply_protocol(back, pi), apply_protocol(t, pi)) == 0.0);
    }
    CHECK_THROWS_AS(protocol_from_json(nlohmann::json{{"framework", "c"}}), ParseError);
}

TEST_CASE("malformed protocols are rejected") {
    Rng rng(47);
    auto t = random_protocol(Framework::Q, ProtocolShape{}, rng);
    t.choose.p[0] += 0.5;
    CHECK_THROWS_AS(t.check(), ProtocolError);
    auto u = random_protocol(Framework::C, ProtocolShape{}, rng);
    CHECK_THROWS_AS(apply_protocol(u, triple_excl()), ProtocolError);
}
