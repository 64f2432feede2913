#pragma once

// Quantum objects (maps, channels, instruments, POVMs, programmable
// instruments) and the Choi calculus connecting them.
//
// Choi convention: C = (Phi (x) id)(Omega), Omega = sum_{mn} |m><n| (x) |m><n|
// unnormalized. The output factor comes first, the input factor second, so
//   Phi(rho) = Tr_in[ C (1 (x) rho^T) ]   and   Tr_out C = Phi^dag(1)^T.

#include <cstddef>
#include <string>
#include <vector>

#include "qincompat/tensor.hpp"

namespace qincompat {

/// A completely positive map stored through its Choi operator on output (x) input.
struct CpMap {
    Systems input;
    Systems output;
    Matrix choi;

    CpMap() = default;
    CpMap(Systems in, Systems out, Matrix c);

    std::size_t din() const { return total_dim(input); }
    std::size_t dout() const { return total_dim(output); }

    /// Choi operator as a labeled block; input labels that collide with
    /// output labels get a trailing apostrophe.
    HermitianBlock choi_block() const;
    /// Tr_out C, an operator on the input.
    Matrix input_marginal() const;

    bool is_cp(double tol) const;
    bool is_trace_preserving(double tol) const;

    static CpMap identity(const Systems& s);
    static CpMap from_kraus(const Systems& in, const Systems& out, const std::vector<Matrix>& kraus);
    /// rho -> Tr(rho) sigma
    static CpMap trace_and_prepare(const Systems& in, const HermitianBlock& sigma);
    static CpMap zero(const Systems& in, const Systems& out);
};

/// Trace-preserving CpMap; construction validates.
struct Channel {
    CpMap map;

    Channel() = default;
    explicit Channel(CpMap m, double tol = 1e-9);
};

/// Outcome-indexed family of CP maps with a common input and output whose sum
/// is trace preserving. `shape` optionally declares the outcome set as a
/// product X_1 x ... x X_n (row-major flattening).
struct Instrument {
    Systems input;
    Systems output;
    std::vector<std::string> outcomes;
    std::vector<std::size_t> shape;
    std::vector<Matrix> chois;

    std::size_t size() const { return chois.size(); }
    std::size_t din() const { return total_dim(input); }
    std::size_t dout() const { return total_dim(output); }
    CpMap map(std::size_t x) const { return {input, output, chois[x]}; }
    Matrix sum_choi() const;

    static Instrument from_maps(const std::vector<CpMap>& maps, std::vector<std::string> outcomes = {});
    static Instrument from_channel(const CpMap& channel);
    /// Appends zero maps until the instrument has `n` outcomes.
    Instrument padded(std::size_t n) const;
};

struct Povm {
    Systems system;
    std::vector<std::string> outcomes;
    std::vector<Matrix> effects;

    std::size_t size() const { return effects.size(); }
    /// Measure-and-discard instrument with trivial output system.
    Instrument as_instrument() const;
};

/// One instrument per program; all programs share the input system.
struct ProgrammableInstrument {
    std::vector<std::string> programs;
    std::vector<Instrument> instruments;

    std::size_t size() const { return instruments.size(); }
    const Systems& input() const { return instruments.front().input; }
    std::size_t max_outcomes() const;
    bool common_output() const;
    bool all_channels() const;
    /// Every program padded to `max_outcomes()` outcomes.
    ProgrammableInstrument padded() const;

    static ProgrammableInstrument from_povms(const std::vector<Povm>& povms);
};

/// mu(x | w, i), stored densely.
class StochasticMatrix {
  public:
    StochasticMatrix() = default;
    StochasticMatrix(std::size_t outcomes, std::size_t mother_outcomes, std::size_t programs);

    double& operator()(std::size_t x, std::size_t w, std::size_t i) { return data_[index(x, w, i)]; }
    double operator()(std::size_t x, std::size_t w, std::size_t i) const { return data_[index(x, w, i)]; }

    std::size_t outcomes() const { return nx_; }
    std::size_t mother_outcomes() const { return nw_; }
    std::size_t programs() const { return ni_; }

    /// Nonnegative with unit column sums within tol.
    bool is_valid(double tol) const;

  private:
    std::size_t index(std::size_t x, std::size_t w, std::size_t i) const { return (i * nw_ + w) * nx_ + x; }

    std::size_t nx_ = 0, nw_ = 0, ni_ = 0;
    std::vector<double> data_;
};

/// Result of a validity check: empty `violation` means valid.
struct Validation {
    std::string violation;
    explicit operator bool() const { return violation.empty(); }
};

Validation validate(const CpMap& map, double tol);
Validation validate(const Instrument& instrument, double tol);
Validation validate(const Povm& povm, double tol);
Validation validate(const ProgrammableInstrument& pi, double tol);
Validation validate(const StochasticMatrix& mu, double tol);

HermitianBlock apply(const CpMap& map, const HermitianBlock& rho);
Matrix apply(const CpMap& map, const Matrix& rho);

/// second o first
CpMap compose(const CpMap& second, const CpMap& first);
/// Parallel composition f (x) g on the concatenated systems.
CpMap tensor(const CpMap& f, const CpMap& g);

/// rho -> sum_x I_x(rho) (x) |x><x|_pointer
Channel extended_channel(const Instrument& instrument, const std::string& pointer = "X");
Povm induced_povm(const Instrument& instrument);

/// Marginal on coordinate `keep` of a mother with declared product outcomes.
Instrument marginal_instrument(const Instrument& mother, std::size_t keep);

/// I_x^(i) = sum_w mu(x|w,i) H_w
ProgrammableInstrument post_process_classical(const Instrument& mother, const StochasticMatrix& mu);

/// Reshuffles a Choi operator into the Liouville (superoperator) matrix acting
/// on row-major vectorized operators, and back.
Matrix choi_to_liouville(const Matrix& choi, std::size_t din, std::size_t dout);
Matrix liouville_to_choi(const Matrix& liou, std::size_t din, std::size_t dout);

/// Choi-level Frobenius distance between two families with the same layout.
double family_distance(const ProgrammableInstrument& a, const ProgrammableInstrument& b);

}  // namespace qincompat
