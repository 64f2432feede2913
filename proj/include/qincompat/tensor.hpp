#pragma once

// Dense complex linear algebra over labeled tensor products.
//
// Every operator carries the ordered list of tensor factors it acts on. All
// subsystem-addressing operations take factor names, never positions.

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qincompat {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Raised when an operation refers to a tensor factor that is not present,
/// or when factor names collide inside one composite.
class LabelError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised on inconsistent matrix or system dimensions.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical tolerances shared by every checker. Verdicts are only meaningful
/// relative to these values.
struct Tolerances {
    double hermitian = 1e-12;  ///< hermiticity of stored operators
    double validation = 1e-9;  ///< CP / TP / normalization checks
    double solver = 1e-7;      ///< feasibility residual and PSD slack
    double separation_margin = 1e-6;
};

struct SystemLabel {
    std::string name;
    std::size_t dim = 1;

    friend bool operator==(const SystemLabel&, const SystemLabel&) = default;
};

using Systems = std::vector<SystemLabel>;

std::size_t total_dim(const Systems& systems);
std::vector<std::size_t> dims_of(const Systems& systems);
/// Throws LabelError on duplicate names or zero dimensions.
void validate_systems(const Systems& systems);
Systems concat(const Systems& a, const Systems& b);

/// A square operator on a labeled composite system. Despite the name the
/// matrix is not forced to be hermitian; `is_hermitian` reports it.
class HermitianBlock {
  public:
    HermitianBlock() = default;
    HermitianBlock(Systems systems, Matrix entries);

    static HermitianBlock identity(Systems systems);
    static HermitianBlock zero(Systems systems);
    static HermitianBlock ket_bra(const SystemLabel& system, std::size_t row, std::size_t col);

    const Systems& systems() const { return systems_; }
    const Matrix& matrix() const { return entries_; }
    Matrix& matrix() { return entries_; }
    std::size_t dim() const { return static_cast<std::size_t>(entries_.rows()); }

    std::size_t position(const std::string& name) const;
    bool has(const std::string& name) const;
    const SystemLabel& system(const std::string& name) const;

    cplx trace() const { return entries_.trace(); }
    bool is_hermitian(double tol) const;
    HermitianBlock adjoint() const;

    /// Reorders tensor factors; `order` must be a permutation of the names.
    HermitianBlock permuted(const std::vector<std::string>& order) const;
    HermitianBlock renamed(const std::string& from, const std::string& to) const;

    HermitianBlock& operator+=(const HermitianBlock& other);
    HermitianBlock& operator-=(const HermitianBlock& other);
    HermitianBlock& operator*=(cplx s);

  private:
    void require_same_systems(const HermitianBlock& other) const;

    Systems systems_;
    Matrix entries_;
};

HermitianBlock operator+(HermitianBlock a, const HermitianBlock& b);
HermitianBlock operator-(HermitianBlock a, const HermitianBlock& b);
HermitianBlock operator*(cplx s, HermitianBlock a);
/// Matrix product of two operators on the same systems.
HermitianBlock operator*(const HermitianBlock& a, const HermitianBlock& b);

struct StateVector {
    Systems systems;
    Vector amplitudes;

    HermitianBlock density() const;
};

HermitianBlock kron(const HermitianBlock& a, const HermitianBlock& b);

/// Traces out the named factors. The remaining factors keep their order.
HermitianBlock partial_trace(const HermitianBlock& op, const std::vector<std::string>& discard);

/// Zeroes every entry that is off-diagonal in the computational basis of
/// `system` (complete dephasing of that factor).
HermitianBlock pinch(const HermitianBlock& op, const std::string& system);

/// Transposes only the named factors.
HermitianBlock partial_transpose(const HermitianBlock& op, const std::vector<std::string>& systems);

struct Eigensystem {
    RealVector values;  ///< ascending
    Matrix vectors;     ///< columns are eigenvectors
};

Eigensystem eig_hermitian(const HermitianBlock& op, double tol = 1e-9);
Eigensystem eig_hermitian(const Matrix& m, double tol = 1e-9);

/// Frobenius-nearest PSD operator (negative eigenvalues clipped).
HermitianBlock project_psd(const HermitianBlock& op, double tol = 1e-9);
Matrix project_psd(const Matrix& m);

double min_eigenvalue(const Matrix& m);
double max_eigenvalue(const Matrix& m);
Matrix hermitian_part(const Matrix& m);

/// Unnormalized maximally entangled operator sum_{mn} |mm><nn| on (first, second)
/// together with the normalized vector d^{-1/2} sum_m |mm>.
std::pair<HermitianBlock, StateVector> max_entangled(std::size_t d, const std::string& first = "R",
                                                     const std::string& second = "S");

/// Generic index permutation helper: maps a row-major multi-index over
/// `dims` into the layout obtained by reordering the factors as `perm`
/// (new factor k is old factor perm[k]).
std::vector<std::size_t> permutation_indices(const std::vector<std::size_t>& dims,
                                             const std::vector<std::size_t>& perm);

/// Applies a factor permutation to a plain matrix whose factors have `dims`.
Matrix permute_factors(const Matrix& m, const std::vector<std::size_t>& dims,
                       const std::vector<std::size_t>& perm);

/// Partial trace of a plain matrix over the trailing factor of dimension `tail`.
Matrix trace_tail(const Matrix& m, std::size_t tail);
/// Partial trace over the leading factor of dimension `head`.
Matrix trace_head(const Matrix& m, std::size_t head);

}  // namespace qincompat
