// Certificate checks. Deliberately avoids the Liouville calculus used by the
// solvers: every composite map is rebuilt from its action on matrix units.

#include <cmath>
#include <functional>
#include <limits>

#include "qincompat/compat.hpp"
#include "seesaw.hpp"

namespace qincompat {

namespace {

using Eigen::Index;
constexpr double kValidTol = 1e-8;
constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix action_choi(const std::function<Matrix(const Matrix&)>& f, std::size_t din) {
    Matrix out;
    for (std::size_t m = 0; m < din; ++m)
        for (std::size_t n = 0; n < din; ++n) {
            Matrix unit = Matrix::Zero(Index(din), Index(din));
            unit(Index(m), Index(n)) = 1.0;
            const Matrix y = f(unit);
            if (out.size() == 0) out = Matrix::Zero(y.rows() * Index(din), y.cols() * Index(din));
            out += detail::kron_plain(y, unit);
        }
    return out;
}

Matrix target_choi(const Instrument& ins, std::size_t x) {
    if (x < ins.size()) return ins.chois[x];
    const auto d = Index(ins.din() * ins.dout());
    return Matrix::Zero(d, d);
}

bool valid_channel(const CpMap& m) { return m.is_cp(kValidTol) && m.is_trace_preserving(kValidTol); }

bool mu_fits(const StochasticMatrix& mu, const Instrument& mother, std::size_t programs, std::size_t max_outcomes) {
    return mu.is_valid(kValidTol) && mu.programs() == programs && mu.mother_outcomes() == mother.size() &&
           mu.outcomes() >= max_outcomes;
}

}  // namespace

double certificate_error(const ProgrammableInstrument& target, const ClassicalCertificate& cert) {
    const Instrument& h = cert.mother;
    if (!validate(h, kValidTol) || !mu_fits(cert.mu, h, target.size(), target.max_outcomes())) return kInf;
    if (h.din() != total_dim(target.input())) return kInf;
    std::vector<Matrix> rebuilt;
    for (std::size_t w = 0; w < h.size(); ++w) {
        const CpMap m = h.map(w);
        rebuilt.push_back(action_choi([&](const Matrix& r) { return qincompat::apply(m, r); }, h.din()));
    }
    double err2 = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const Instrument& ins = target.instruments[i];
        if (ins.dout() != h.dout()) return kInf;
        for (std::size_t x = 0; x < cert.mu.outcomes(); ++x) {
            Matrix acc = target_choi(ins, x);
            for (std::size_t w = 0; w < h.size(); ++w) acc -= cert.mu(x, w, i) * rebuilt[w];
            err2 += acc.squaredNorm();
        }
    }
    return std::sqrt(err2);
}

double parallel_certificate_error(const ProgrammableInstrument& target, const ClassicalCertificate& cert) {
    const Instrument& h = cert.mother;
    const std::size_t n = target.size();
    if (!validate(h, kValidTol) || !mu_fits(cert.mu, h, n, target.max_outcomes())) return kInf;
    const std::size_t da = total_dim(target.input());
    if (h.din() != da) return kInf;
    std::vector<std::size_t> dims;
    std::size_t prod = 1;
    for (const auto& ins : target.instruments) {
        dims.push_back(ins.dout());
        prod *= ins.dout();
    }
    if (prod != h.dout()) return kInf;
    dims.push_back(da);
    std::vector<Matrix> rebuilt;
    for (std::size_t w = 0; w < h.size(); ++w) {
        const CpMap m = h.map(w);
        rebuilt.push_back(action_choi([&](const Matrix& r) { return qincompat::apply(m, r); }, da));
    }
    double err2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> perm{i, n};
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) perm.push_back(k);
        const std::size_t rest = prod / dims[i];
        std::vector<Matrix> marginal;
        for (const auto& r : rebuilt) marginal.push_back(trace_tail(permute_factors(r, dims, perm), rest));
        for (std::size_t x = 0; x < cert.mu.outcomes(); ++x) {
            Matrix acc = target_choi(target.instruments[i], x);
            for (std::size_t w = 0; w < h.size(); ++w) acc -= cert.mu(x, w, i) * marginal[w];
            err2 += acc.squaredNorm();
        }
    }
    return std::sqrt(err2);
}

double certificate_error(const ProgrammableInstrument& target, const QCompatCertificate& cert) {
    const Instrument& h = cert.mother;
    const std::size_t n = target.size();
    if (!validate(h, kValidTol) || !mu_fits(cert.mu, h, n, target.max_outcomes())) return kInf;
    const std::size_t da = total_dim(target.input());
    if (h.din() != da || cert.post.size() != n * h.size() * cert.mu.outcomes()) return kInf;
    double err2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Instrument& ins = target.instruments[i];
        for (std::size_t x = 0; x < cert.mu.outcomes(); ++x) {
            Matrix acc = target_choi(ins, x);
            for (std::size_t w = 0; w < h.size(); ++w) {
                const CpMap& d = cert.post_channel(x, w, i);
                if (!valid_channel(d) || d.din() != h.dout() || d.dout() != ins.dout()) return kInf;
                const double p = cert.mu(x, w, i);
                if (p == 0.0) continue;
                const CpMap hw = h.map(w);
                acc -= p * action_choi([&](const Matrix& r) { return qincompat::apply(d, qincompat::apply(hw, r)); }, da);
            }
            err2 += acc.squaredNorm();
        }
    }
    return std::sqrt(err2);
}

double certificate_error(const ProgrammableInstrument& target, const NoExclusionCertificate& cert) {
    const Instrument& h = cert.mother;
    if (cert.first >= target.size() || cert.recovery.size() != cert.targets.size()) return kInf;
    const Instrument& first = target.instruments[cert.first];
    if (!validate(h, kValidTol) || !cert.mu.is_valid(kValidTol) || cert.mu.programs() != 1 ||
        cert.mu.mother_outcomes() != h.size() || cert.mu.outcomes() < first.size())
        return kInf;
    const std::size_t da = total_dim(target.input());
    const std::size_t nx = cert.mu.outcomes();
    if (h.din() != da || cert.post.size() != h.size() * nx) return kInf;
    std::vector<CpMap> hw;
    for (std::size_t w = 0; w < h.size(); ++w) hw.push_back(h.map(w));

    double err2 = 0.0;
    for (std::size_t x = 0; x < nx; ++x) {
        Matrix acc = target_choi(first, x);
        for (std::size_t w = 0; w < h.size(); ++w) {
            const CpMap& d = cert.post[w * nx + x];
            if (!valid_channel(d) || d.din() != h.dout() || d.dout() != first.dout()) return kInf;
            const double p = cert.mu(x, w, 0);
            if (p == 0.0) continue;
            acc -= p * action_choi([&](const Matrix& r) { return qincompat::apply(d, qincompat::apply(hw[w], r)); }, da);
        }
        err2 += acc.squaredNorm();
    }
    for (std::size_t t = 0; t < cert.targets.size(); ++t) {
        if (cert.targets[t] >= target.size() || cert.recovery[t].size() != h.size()) return kInf;
        const Instrument& second = target.instruments[cert.targets[t]];
        for (const auto& k : cert.recovery[t])
            if (!validate(k, kValidTol) || k.din() != h.dout() || k.dout() != second.dout() ||
                k.size() != second.size())
                return kInf;
        for (std::size_t y = 0; y < second.size(); ++y) {
            Matrix acc = second.chois[y];
            for (std::size_t w = 0; w < h.size(); ++w) {
                const CpMap k = cert.recovery[t][w].map(y);
                acc -= action_choi([&](const Matrix& r) { return qincompat::apply(k, qincompat::apply(hw[w], r)); }, da);
            }
            err2 += acc.squaredNorm();
        }
    }
    return std::sqrt(err2);
}

}  // namespace qincompat
