#include <doctest.h>

#include <cmath>

#include "qincompat/fixtures.hpp"
#include "qincompat/json_io.hpp"
#include "qincompat/qobjects.hpp"
#include "qincompat/random.hpp"

using namespace qincompat;

namespace {

const Systems kA{{"A", 2}}, kB{{"B", 2}}, kC{{"C", 3}};

// Choi operator assembled from the action of `f` on every matrix unit.
template <class F>
Matrix choi_from_action(F&& f, std::size_t din, std::size_t dout) {
    const auto di = static_cast<Eigen::Index>(din), dd = static_cast<Eigen::Index>(dout);
    Matrix c = Matrix::Zero(dd * di, dd * di);
    for (Eigen::Index m = 0; m < di; ++m)
        for (Eigen::Index n = 0; n < di; ++n) {
            Matrix unit = Matrix::Zero(di, di);
            unit(m, n) = 1.0;
            const Matrix image = f(unit);
            for (Eigen::Index b = 0; b < dd; ++b)
                for (Eigen::Index bp = 0; bp < dd; ++bp) c(b * di + m, bp * di + n) = image(b, bp);
        }
    return c;
}

}  // namespace

TEST_CASE("apply") {
    Rng rng(10);
    SUBCASE("identity channel") {
        Matrix rho = random_density(2, rng);
        CHECK((qincompat::apply(identity_map(kA, kB), rho) - rho).norm() < 1e-14);
    }
    SUBCASE("completely depolarizing") {
        auto dep = CpMap::trace_and_prepare(kA, HermitianBlock(kB, 0.5 * Matrix::Identity(2, 2)));
        Matrix rho = random_psd(2, rng);
        CHECK((qincompat::apply(dep, rho) - 0.5 * rho.trace() * Matrix::Identity(2, 2)).norm() < 1e-14);
    }
    SUBCASE("Kraus sum") {
        for (int t = 0; t < 10; ++t) {
            std::vector<Matrix> ks{random_ginibre(3, 2, rng), random_ginibre(3, 2, rng), random_ginibre(3, 2, rng)};
            auto map = CpMap::from_kraus(kA, kC, ks);
            Matrix rho = random_density(2, rng);
            Matrix expect = Matrix::Zero(3, 3);
            for (const auto& k : ks) expect += k * rho * k.adjoint();
            CHECK((qincompat::apply(map, rho) - expect).norm() < 1e-12);
        }
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(qincompat::apply(identity_map(kA, kB), HermitianBlock::identity(kC)), DimensionError);
    }
}

TEST_CASE("compose") {
    Rng rng(11);
    SUBCASE("identity is neutral") {
        auto f = random_channel(kA, kC, 2, rng);
        CHECK((compose(identity_map(kC, kC), f).choi - f.choi).norm() < 1e-13);
    }
    SUBCASE("trace-and-prepare after anything is constant") {
        auto f = random_channel(kA, kB, 3, rng);
        HermitianBlock sigma(kC, random_density(3, rng));
        auto g = CpMap::trace_and_prepare(kB, sigma);
        CHECK((compose(g, f).choi - CpMap::trace_and_prepare(kA, sigma).choi).norm() < 1e-12);
    }
    SUBCASE("matches sequential action on every basis operator") {
        for (int t = 0; t < 10; ++t) {
            auto f = CpMap::from_kraus(kA, kC, {random_ginibre(3, 2, rng), random_ginibre(3, 2, rng)});
            auto g = CpMap::from_kraus(kC, kB, {random_ginibre(2, 3, rng)});
            const Matrix oracle = choi_from_action([&](const Matrix& u) { return qincompat::apply(g, qincompat::apply(f, u)); }, 2, 2);
            CHECK((compose(g, f).choi - oracle).norm() < 1e-10);
        }
    }
    SUBCASE("associative") {
        auto f = random_channel(kA, kC, 2, rng);
        auto g = random_channel(kC, kB, 2, rng);
        auto h = random_channel(kB, kA, 2, rng);
        CHECK((compose(h, compose(g, f)).choi - compose(compose(h, g), f).choi).norm() < 1e-10);
    }
    SUBCASE("system mismatch") {
        CHECK_THROWS_AS(compose(identity_map(kA, kB), identity_map(kC, kC)), LabelError);
    }
}

TEST_CASE("tensor of maps acts factorwise") {
    Rng rng(12);
    auto f = random_channel(kA, kC, 2, rng);
    auto g = random_channel(kB, kA, 2, rng);
    Matrix r1 = random_density(2, rng), r2 = random_density(2, rng);
    HermitianBlock prod = kron(HermitianBlock(kA, r1), HermitianBlock(kB, r2));
    const Matrix lhs = qincompat::apply(tensor(f, g), prod.matrix());
    const Matrix rhs = kron(HermitianBlock(kC, qincompat::apply(f, r1)), HermitianBlock({{"A2", 2}}, qincompat::apply(g, r2))).matrix();
    CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("extended_channel") {
    Rng rng(13);
    SUBCASE("single outcome") {
        auto ch = random_channel(kA, kB, 2, rng);
        auto ext = extended_channel(Instrument::from_channel(ch));
        Matrix rho = random_density(2, rng);
        CHECK((qincompat::apply(ext.map, rho) - qincompat::apply(ch, rho)).norm() < 1e-13);
        CHECK(ext.map.output.back().dim == 1);
    }
    SUBCASE("Lueders Z on |+>") {
        Matrix plus(2, 2);
        plus << 0.5, 0.5, 0.5, 0.5;
        auto ext = extended_channel(lueders_z(kA));
        Matrix expect = Matrix::Zero(4, 4);
        expect(0, 0) = 0.5;  // |0>|0>
        expect(3, 3) = 0.5;  // |1>|1>
        CHECK((qincompat::apply(ext.map, plus) - expect).norm() < 1e-14);
    }
    SUBCASE("pointer probabilities and classicality") {
        for (int t = 0; t < 10; ++t) {
            auto ins = random_instrument(kA, kC, 3, 2, rng);
            auto ext = extended_channel(ins);
            CHECK(ext.map.is_trace_preserving(1e-10));
            Matrix rho = random_density(2, rng);
            HermitianBlock out(ext.map.output, qincompat::apply(ext.map, rho));
            for (std::size_t x = 0; x < 3; ++x) {
                auto proj = kron(HermitianBlock::identity(kC), HermitianBlock::ket_bra(ext.map.output.back(), x, x));
                CHECK(std::abs((proj.matrix() * out.matrix()).trace() - qincompat::apply(ins.map(x), rho).trace()) < 1e-12);
            }
            CHECK((pinch(out, ext.map.output.back().name).matrix() - out.matrix()).norm() < 1e-14);
            auto choi = ext.map.choi_block();
            CHECK((pinch(choi, ext.map.output.back().name).matrix() - choi.matrix()).norm() < 1e-14);
        }
    }
}

TEST_CASE("induced_povm") {
    Rng rng(14);
    auto trivial = induced_povm(Instrument::from_channel(random_channel(kA, kB, 2, rng)));
    REQUIRE(trivial.size() == 1);
    CHECK((trivial.effects[0] - Matrix::Identity(2, 2)).norm() < 1e-12);

    auto z = induced_povm(lueders_z(kA));
    CHECK(std::abs(z.effects[0](0, 0) - 1.0) < 1e-14);
    CHECK(std::abs(z.effects[1](1, 1) - 1.0) < 1e-14);
    CHECK(z.effects[0].norm() == doctest::Approx(1.0));

    for (int t = 0; t < 10; ++t) {
        auto ins = random_instrument(kA, kC, 3, 2, rng);
        auto p = induced_povm(ins);
        CHECK(validate(p, 1e-10));
        Matrix rho = random_density(2, rng);
        for (std::size_t x = 0; x < 3; ++x)
            CHECK(std::abs((p.effects[x] * rho).trace() - qincompat::apply(ins.map(x), rho).trace()) < 1e-12);
    }
}

TEST_CASE("marginal_instrument") {
    Rng rng(15);
    SUBCASE("one coordinate is the identity") {
        auto ins = random_instrument(kA, kB, 3, 1, rng);
        ins.shape = {3};
        auto m = marginal_instrument(ins, 0);
        for (std::size_t x = 0; x < 3; ++x) CHECK((m.chois[x] - ins.chois[x]).norm() == 0.0);
    }
    SUBCASE("product mother") {
        auto base = random_instrument(kA, kB, 2, 2, rng);
        Instrument mother = base;
        mother.chois.clear();
        mother.outcomes.clear();
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t y = 0; y < 3; ++y) {
                mother.chois.push_back(y == 0 ? base.chois[x] : Matrix::Zero(4, 4));
                mother.outcomes.push_back(std::to_string(x) + std::to_string(y));
            }
        mother.shape = {2, 3};
        CHECK(validate(mother, 1e-10));
        auto m = marginal_instrument(mother, 0);
        for (std::size_t x = 0; x < 2; ++x) CHECK((m.chois[x] - base.chois[x]).norm() < 1e-14);
    }
    SUBCASE("random mother: marginals valid and POVM diagram commutes") {
        auto mother = random_instrument(kA, kB, 4, 2, rng);
        mother.shape = {2, 2};
        auto mp = induced_povm(mother);
        for (std::size_t i = 0; i < 2; ++i) {
            auto m = marginal_instrument(mother, i);
            CHECK(validate(m, 1e-10));
            auto p = induced_povm(m);
            for (std::size_t x = 0; x < 2; ++x) {
                Matrix expect = i == 0 ? Matrix(mp.effects[2 * x] + mp.effects[2 * x + 1])
                                       : Matrix(mp.effects[x] + mp.effects[2 + x]);
                CHECK((p.effects[x] - expect).norm() < 1e-12);
            }
        }
    }
    SUBCASE("no declared product") {
        CHECK_THROWS(marginal_instrument(lueders_z(kA), 0));
    }
}

TEST_CASE("post_process_classical") {
    Rng rng(16);
    auto mother = random_instrument(kA, kB, 3, 2, rng);
    SUBCASE("identity relabeling replicates the mother") {
        StochasticMatrix mu(3, 3, 2);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t w = 0; w < 3; ++w) mu(w, w, i) = 1.0;
        auto pi = post_process_classical(mother, mu);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t x = 0; x < 3; ++x) CHECK((pi.instruments[i].chois[x] - mother.chois[x]).norm() == 0.0);
    }
    SUBCASE("constant outcome gives the average channel") {
        StochasticMatrix mu(2, 3, 2);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t w = 0; w < 3; ++w) mu(0, w, i) = 1.0;
        auto pi = post_process_classical(mother, mu);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK((pi.instruments[i].chois[0] - mother.sum_choi()).norm() < 1e-14);
            CHECK(pi.instruments[i].chois[1].norm() == 0.0);
        }
    }
    SUBCASE("random post-processing is a valid family") {
        auto pi = post_process_classical(mother, random_stochastic(2, 3, 3, rng));
        CHECK(validate(pi, 1e-10));
    }
    SUBCASE("index mismatch") { CHECK_THROWS_AS(post_process_classical(mother, StochasticMatrix(2, 4, 1)), DimensionError); }
}

TEST_CASE("fixtures") {
    for (const auto& [name, pi] : fixtures()) {
        INFO(name);
        CHECK(validate(pi, 1e-10));
    }
    auto id = pair_id();
    CHECK(id.all_channels());
    CHECK(id.instruments[0].input == id.instruments[1].input);
    for (const auto& p : povm_xz(1.0))
        for (const auto& e : p.effects) {
            CHECK((e * e - e).norm() < 1e-14);
            CHECK(std::abs(e.trace() - 1.0) < 1e-14);
        }
    for (double eta : {0.0, 0.5, 1.0}) {
        auto ps = povm_xz(eta);
        auto sharp = povm_xz(1.0);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(validate(ps[k], 1e-12));
            for (std::size_t x = 0; x < 2; ++x)
                CHECK((ps[k].effects[x] - (eta * sharp[k].effects[x] + (1 - eta) * 0.5 * Matrix::Identity(2, 2))).norm() < 1e-14);
        }
    }
}

TEST_CASE("validation names the violated invariant") {
    Matrix c = Matrix::Identity(4, 4);
    c(0, 0) = -0.1;
    CHECK(validate(CpMap(kA, kB, c), 1e-9).violation == "not completely positive");
    auto ins = Instrument::from_channel(identity_map(kA, kB));
    ins.chois[0] *= 1.1;
    CHECK(validate(ins, 1e-9).violation == "not trace-preserving");
}

TEST_CASE("family JSON round trip") {
    auto pi = classical_free();
    auto back = family_from_json(json::parse(to_json(pi).dump()));
    CHECK(family_distance(pi, back) == 0.0);
    CHECK(back.programs == pi.programs);
}
