#include "qincompat/random.hpp"

#include <cmath>

namespace qincompat {

Matrix random_ginibre(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = cplx(n(rng), n(rng));
    return g;
}

Matrix random_isometry(std::size_t rows, std::size_t cols, Rng& rng) {
    const Matrix g = random_ginibre(rows, cols, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
    // Fix column phases so the distribution is Haar.
    const Matrix r = qr.matrixQR();
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
        const cplx d = r(k, k);
        if (std::abs(d) > 0) q.col(k) *= d / std::abs(d);
    }
    return q;
}

Matrix random_unitary(std::size_t d, Rng& rng) { return random_isometry(d, d, rng); }

Matrix random_hermitian(std::size_t d, Rng& rng) {
    const Matrix g = random_ginibre(d, d, rng);
    return 0.5 * (g + g.adjoint());
}

Matrix random_psd(std::size_t d, Rng& rng, std::size_t rank) {
    const Matrix g = random_ginibre(d, rank == 0 ? d : rank, rng);
    return g * g.adjoint();
}

Matrix random_density(std::size_t d, Rng& rng) {
    Matrix p = random_psd(d, rng);
    return p / p.trace().real();
}

Vector random_vector(std::size_t d, Rng& rng) { return random_ginibre(d, 1, rng).col(0); }

CpMap random_channel(const Systems& in, const Systems& out, std::size_t kraus, Rng& rng) {
    return random_instrument(in, out, 1, kraus, rng).map(0);
}

Instrument random_instrument(const Systems& in, const Systems& out, std::size_t outcomes, std::size_t kraus,
                             Rng& rng) {
    const std::size_t din = total_dim(in);
    const std::size_t dout = total_dim(out);
    const Matrix v = random_isometry(outcomes * kraus * dout, din, rng);
    std::vector<CpMap> maps;
    const auto rows = static_cast<Eigen::Index>(dout);
    for (std::size_t x = 0; x < outcomes; ++x) {
        std::vector<Matrix> ks;
        for (std::size_t k = 0; k < kraus; ++k)
            ks.push_back(v.block(static_cast<Eigen::Index>((x * kraus + k) * dout), 0, rows, v.cols()));
        maps.push_back(CpMap::from_kraus(in, out, ks));
    }
    return Instrument::from_maps(maps);
}

StochasticMatrix random_stochastic(std::size_t outcomes, std::size_t mother_outcomes, std::size_t programs,
                                   Rng& rng) {
    std::exponential_distribution<double> e(1.0);
    StochasticMatrix mu(outcomes, mother_outcomes, programs);
    for (std::size_t i = 0; i < programs; ++i)
        for (std::size_t w = 0; w < mother_outcomes; ++w) {
            double s = 0.0;
            for (std::size_t x = 0; x < outcomes; ++x) s += (mu(x, w, i) = e(rng));
            for (std::size_t x = 0; x < outcomes; ++x) mu(x, w, i) /= s;
        }
    return mu;
}

}  // namespace qincompat
