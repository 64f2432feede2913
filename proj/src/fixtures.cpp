#include "qincompat/fixtures.hpp"

#include <cmath>

#include "qincompat/random.hpp"

namespace qincompat {

namespace {

const Systems kA{{"A", 2}};
const Systems kB{{"B", 2}};

ProgrammableInstrument family(std::vector<Instrument> members, std::vector<std::string> names = {}) {
    ProgrammableInstrument pi;
    for (std::size_t i = 0; i < members.size(); ++i)
        pi.programs.push_back(names.empty() ? std::to_string(i) : names[i]);
    pi.instruments = std::move(members);
    return pi;
}

}  // namespace

CpMap identity_map(const Systems& in, const Systems& out) {
    if (total_dim(in) != total_dim(out)) throw DimensionError("identity_map: dimensions differ");
    return {in, out, max_entangled(total_dim(in)).first.matrix()};
}

Instrument lueders(const Systems& s, const Matrix& basis) {
    std::vector<CpMap> maps;
    for (Eigen::Index k = 0; k < basis.cols(); ++k) {
        const Matrix proj = basis.col(k) * basis.col(k).adjoint();
        maps.push_back(CpMap::from_kraus(s, s, {proj}));
    }
    return Instrument::from_maps(maps);
}

Instrument lueders_z(const Systems& s) {
    const auto d = static_cast<Eigen::Index>(total_dim(s));
    return lueders(s, Matrix::Identity(d, d));
}

Instrument lueders_x(const Systems& s) {
    Matrix h(2, 2);
    h << 1, 1, 1, -1;
    return lueders(s, h / std::sqrt(2.0));
}

std::vector<Povm> povm_xz(double eta) {
    const Matrix id = Matrix::Identity(2, 2);
    Matrix plus(2, 2), minus(2, 2);
    plus << 0.5, 0.5, 0.5, 0.5;
    minus << 0.5, -0.5, -0.5, 0.5;
    Matrix zero = Matrix::Zero(2, 2), one = Matrix::Zero(2, 2);
    zero(0, 0) = 1.0;
    one(1, 1) = 1.0;
    auto noisy = [&](const Matrix& p) -> Matrix { return eta * p + (1.0 - eta) * 0.5 * id; };
    Povm x{kA, {"+", "-"}, {noisy(plus), noisy(minus)}};
    Povm z{kA, {"0", "1"}, {noisy(zero), noisy(one)}};
    return {x, z};
}

ProgrammableInstrument pair_id() {
    const auto id = Instrument::from_channel(identity_map(kA, kB));
    return family({id, id}, {"id", "id'"});
}

ProgrammableInstrument pair_const() {
    const auto zero = HermitianBlock::ket_bra(kB[0], 0, 0);
    const auto one = HermitianBlock::ket_bra(kB[0], 1, 1);
    return family({Instrument::from_channel(CpMap::trace_and_prepare(kA, zero)),
                   Instrument::from_channel(CpMap::trace_and_prepare(kA, one))},
                  {"prep0", "prep1"});
}

ProgrammableInstrument channels_rand(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Instrument> members;
    for (int k = 0; k < 3; ++k) members.push_back(Instrument::from_channel(random_channel(kA, kB, 2, rng)));
    return family(members);
}

ProgrammableInstrument triple_excl() {
    return family({Instrument::from_channel(identity_map(kA, kA)), lueders_x(kA), lueders_z(kA)},
                  {"id", "luedersX", "luedersZ"});
}

ProgrammableInstrument classical_free(std::uint64_t seed) {
    Rng rng(seed);
    const Instrument mother = random_instrument(kA, kB, 3, 2, rng);
    const StochasticMatrix mu = random_stochastic(2, 3, 2, rng);
    return post_process_classical(mother, mu);
}

ProgrammableInstrument trivial_resource() {
    const Systems in{{"A0", 1}};
    const Systems out{{"B0", 1}};
    return family({Instrument::from_channel(CpMap(in, out, Matrix::Identity(1, 1)))}, {"0"});
}

std::map<std::string, ProgrammableInstrument> fixtures(double eta) {
    return {
        {"PAIR_ID", pair_id()},
        {"PAIR_CONST", pair_const()},
        {"CHANNELS_RAND", channels_rand()},
        {"TRIPLE_EXCL", triple_excl()},
        {"POVM_XZ", ProgrammableInstrument::from_povms(povm_xz(eta))},
        {"CLASSICAL_FREE", classical_free()},
    };
}

}  // namespace qincompat
