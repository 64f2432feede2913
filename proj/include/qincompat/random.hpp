#pragma once

// Seeded random generators for states, maps, and instruments. Used by the
// fixtures and the property tests; every draw is reproducible from the seed.

#include <cstddef>
#include <cstdint>
#include <random>

#include "qincompat/qobjects.hpp"

namespace qincompat {

using Rng = std::mt19937_64;

Matrix random_ginibre(std::size_t rows, std::size_t cols, Rng& rng);
Matrix random_unitary(std::size_t d, Rng& rng);
/// Haar-random isometry from C^cols into C^rows (rows >= cols).
Matrix random_isometry(std::size_t rows, std::size_t cols, Rng& rng);
Matrix random_hermitian(std::size_t d, Rng& rng);
Matrix random_density(std::size_t d, Rng& rng);
/// g g^dag with g a d x rank Ginibre matrix; rank 0 means full rank.
Matrix random_psd(std::size_t d, Rng& rng, std::size_t rank = 0);
Vector random_vector(std::size_t d, Rng& rng);

CpMap random_channel(const Systems& in, const Systems& out, std::size_t kraus, Rng& rng);
Instrument random_instrument(const Systems& in, const Systems& out, std::size_t outcomes, std::size_t kraus,
                             Rng& rng);
StochasticMatrix random_stochastic(std::size_t outcomes, std::size_t mother_outcomes, std::size_t programs,
                                   Rng& rng);

}  // namespace qincompat
