#pragma once

// Canonical qubit families separating the compatibility notions.

#include <cstdint>
#include <map>
#include <string>

#include "qincompat/qobjects.hpp"

namespace qincompat {

/// Identity channel between two systems of equal dimension.
CpMap identity_map(const Systems& in, const Systems& out);

/// Lueders instrument of the orthonormal basis given by the columns of `basis`.
Instrument lueders(const Systems& s, const Matrix& basis);
Instrument lueders_z(const Systems& s);
Instrument lueders_x(const Systems& s);

/// Sharp X and Z qubit POVMs mixed with white noise: eta P + (1 - eta) 1/2.
std::vector<Povm> povm_xz(double eta);

ProgrammableInstrument pair_id();
ProgrammableInstrument pair_const();
ProgrammableInstrument channels_rand(std::uint64_t seed = 7);
ProgrammableInstrument triple_excl();
ProgrammableInstrument classical_free(std::uint64_t seed = 11);

/// The canonical free resource: trace the input and prepare |0><0| on a
/// one-dimensional output, with a single program and outcome.
ProgrammableInstrument trivial_resource();

/// PAIR_ID, PAIR_CONST, CHANNELS_RAND, TRIPLE_EXCL, POVM_XZ (at `eta`),
/// CLASSICAL_FREE.
std::map<std::string, ProgrammableInstrument> fixtures(double eta = 1.0);

}  // namespace qincompat
