#pragma once

// Affine-constrained PSD feasibility with verified infeasibility witnesses,
// plus the two convex subproblem solvers used by the see-saw heuristics.
//
// Variables are Hermitian blocks X_1..X_n. Constraints read
//   sum_b Tr(G_{k,b} X_b) = rhs_k.
// Internally each block is vectorized isometrically (diagonal entries, then
// sqrt2 Re and sqrt2 Im of the strict upper triangle), so Tr(G X) becomes an
// ordinary dot product.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qincompat/tensor.hpp"

namespace qincompat {

struct ConstraintTerm {
    std::size_t block = 0;
    Matrix op;
};

struct Constraint {
    std::vector<ConstraintTerm> terms;
    double rhs = 0.0;
    /// Caller-defined grouping (e.g. one group per target operator); -1 = none.
    int group = -1;
    /// For constraints generated from a matrix equation: the Hermitian basis
    /// element on the target space that this constraint tests against.
    Matrix basis;
};

struct AffinePsdProblem {
    std::vector<std::string> block_names;
    std::vector<std::size_t> block_dims;
    std::vector<Constraint> constraints;

    std::size_t add_block(std::string name, std::size_t dim);
    void add_constraint(Constraint c);
    /// Adds one constraint per Hermitian basis element E of the target space:
    ///   sum_b Tr(adjoint_b(E) X_b) = Tr(E target).
    /// `adjoint` maps E to the list of (block, G) terms.
    void add_matrix_equality(const std::function<std::vector<ConstraintTerm>(const Matrix&)>& adjoint,
                             const Matrix& target, int group = -1);

    std::size_t size() const { return block_dims.size(); }
    /// Throws DimensionError / std::invalid_argument on malformed data.
    void check() const;
};

/// Orthonormal basis of d x d Hermitian matrices under Tr(A B), in the same
/// order as the vectorization.
std::vector<Matrix> hermitian_basis(std::size_t d);

/// Isometric real coordinates for a list of Hermitian blocks.
class BlockLayout {
  public:
    BlockLayout() = default;
    explicit BlockLayout(std::vector<std::size_t> dims);

    std::size_t size() const { return total_; }
    std::size_t blocks() const { return dims_.size(); }
    std::size_t offset(std::size_t b) const { return offsets_[b]; }
    std::size_t dim(std::size_t b) const { return dims_[b]; }

    RealVector pack(const std::vector<Matrix>& xs) const;
    std::vector<Matrix> unpack(const RealVector& v) const;
    void pack_block(const Matrix& m, std::size_t b, RealVector& out) const;
    Matrix unpack_block(const RealVector& v, std::size_t b) const;
    /// Projects every block onto the PSD cone.
    RealVector project_psd(const RealVector& v) const;
    double min_eigenvalue(const RealVector& v) const;

  private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    std::size_t total_ = 0;
};

/// Dense constraint matrix A (rows = constraints) in layout coordinates.
Eigen::MatrixXd constraint_matrix(const AffinePsdProblem& problem, const BlockLayout& layout);
RealVector constraint_rhs(const AffinePsdProblem& problem);

struct SolverConfig {
    double tol = 1e-7;
    double separation_margin = 1e-6;
    std::size_t max_iter = 50000;
    std::uint64_t seed = 0;
    /// Iterations between convergence / stall checks.
    std::size_t check_every = 50;
};

struct Witness {
    std::vector<double> multipliers;
};

enum class FeasibilityStatus { Feasible, Infeasible, Undecided };

std::string to_string(FeasibilityStatus s);

struct FeasibilityResult {
    FeasibilityStatus status = FeasibilityStatus::Undecided;
    std::vector<Matrix> assignment;  ///< set iff Feasible
    std::optional<Witness> witness;  ///< set iff Infeasible
    double residual = 0.0;           ///< final distance between the two sets
    std::size_t iterations = 0;
    std::string diagnostics;
};

FeasibilityResult solve(const AffinePsdProblem& problem, const SolverConfig& cfg = {});

/// S = sum_k y_k G_k, blockwise.
std::vector<Matrix> witness_operator(const AffinePsdProblem& problem, const Witness& w);
/// sum_k y_k rhs_k
double witness_value(const AffinePsdProblem& problem, const Witness& w);

/// lambda_max(S_b) <= tol on every block and sum_k y_k rhs_k >= margin.
/// One eigendecomposition per block; shares no state with the solver.
bool verify_witness(const AffinePsdProblem& problem, const Witness& w, double tol = 1e-7,
                    double margin = 1e-6);

/// Largest violation of a candidate assignment: max(|A x - b|_inf, -lambda_min).
double assignment_violation(const AffinePsdProblem& problem, const std::vector<Matrix>& xs);

struct QpConfig {
    double rho = 1.0;
    double tol = 1e-9;
    std::size_t max_iter = 5000;
};

struct QpResult {
    std::vector<Matrix> x;  ///< PSD blocks; affine residual reported below
    double objective = 0.0;
    double affine_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Convex quadratic programs over a PSD-and-affine feasible set:
///   minimize 1/2 x^T Q x - c^T x   subject to A x = b, every block PSD,
/// solved by ADMM on a null-space parametrization of the affine constraints.
/// Q may be empty (linear objective; the feasible set must then be bounded).
/// Stateful so repeated solves with changing objectives reuse the
/// factorization of the constraint set.
class QpSolver {
  public:
    explicit QpSolver(const AffinePsdProblem& constraints);

    const BlockLayout& layout() const { return layout_; }
    bool consistent() const { return consistent_; }

    QpResult solve(const Eigen::MatrixXd& q, const RealVector& c, const QpConfig& cfg = {},
                   const std::vector<Matrix>* warm = nullptr) const;
    /// minimize 1/2 |F x - f|^2 over the same set.
    QpResult least_squares(const Eigen::MatrixXd& f_mat, const RealVector& f, const QpConfig& cfg = {},
                           const std::vector<Matrix>* warm = nullptr) const;

  private:
    QpResult admm(const Eigen::MatrixXd& reduced, const RealVector& c, const RealVector& qxp, const QpConfig& cfg,
                  const std::vector<Matrix>* warm, const std::function<double(const RealVector&)>& objective) const;

    BlockLayout layout_;
    Eigen::MatrixXd null_;  ///< orthonormal basis of ker A
    RealVector particular_; ///< min-norm solution of A x = b
    bool consistent_ = true;
};

nlohmann::json to_json(const AffinePsdProblem& problem);
AffinePsdProblem problem_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeasibilityResult& r);

}  // namespace qincompat
