#pragma once

// Deciders for classical, parallel, q-compatibility and (non-)exclusivity of
// families of instruments, and the hierarchy report tying them together.
//
// Every verdict is three-valued. Compatible verdicts carry a certificate that
// `certificate_error` re-checks without touching the solvers; Incompatible
// verdicts carry a separating functional that `verify_witness` re-checks.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qincompat/feasibility.hpp"
#include "qincompat/qobjects.hpp"

namespace qincompat {

enum class Notion { Classical, Parallel, Q, Exclusivity };
enum class VerdictStatus { Compatible, Incompatible, Undecided };

std::string to_string(Notion n);
std::string to_string(VerdictStatus s);
Notion notion_from_string(const std::string& s);

/// Mother instrument with product outcome set plus deterministic or random
/// classical post-processing. For the parallel notion the mother's output is
/// the tensor product of the programs' outputs.
struct ClassicalCertificate {
    Instrument mother;
    StochasticMatrix mu;
};

struct QCompatCertificate {
    Instrument mother;  ///< A -> C
    StochasticMatrix mu;
    /// D^{(x,w,i)} : C -> B_i, stored at index (i * |W| + w) * |X| + x.
    std::vector<CpMap> post;

    const CpMap& post_channel(std::size_t x, std::size_t w, std::size_t i) const {
        return post[(i * mother.size() + w) * mu.outcomes() + x];
    }
};

/// `first` is realized through (mother, mu, post); every program listed in
/// `targets` is recovered afterwards by the instruments recovery[t][w].
struct NoExclusionCertificate {
    std::size_t first = 0;
    std::vector<std::size_t> targets;
    Instrument mother;  ///< A -> C
    StochasticMatrix mu;  ///< mu(x | w), one program
    std::vector<CpMap> post;  ///< D^{(x,w)} at index w * |X| + x
    std::vector<std::vector<Instrument>> recovery;
};

/// A verified separating functional for a convex feasibility problem.
struct IncompatibilityWitness {
    std::string source;  ///< e.g. "classical", "parallel", "induced povm"
    AffinePsdProblem problem;
    Witness witness;
    /// Constraint group id -> (program, outcome) of the target operator.
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    double value = 0.0;  ///< sum_k y_k b_k with |S| normalized

    bool verify(double tol = 1e-7, double margin = 1e-6) const { return verify_witness(problem, witness, tol, margin); }
};

struct Verdict {
    Notion notion = Notion::Classical;
    VerdictStatus status = VerdictStatus::Undecided;
    std::optional<ClassicalCertificate> classical;  ///< classical and parallel
    std::optional<QCompatCertificate> q;
    /// One entry in single-mother mode, one per recovered program otherwise.
    std::vector<NoExclusionCertificate> no_exclusion;
    std::vector<IncompatibilityWitness> witnesses;
    double residual = 0.0;
    std::size_t iterations = 0;
    std::string diagnostics;
};

struct CompatConfig {
    double tol = 1e-7;  ///< certificate reconstruction tolerance (Choi Frobenius)
    SolverConfig solver;
    std::uint64_t seed = 0;
    std::size_t restarts = 20;
    /// Retry undecided exact solves with the randomized see-saw search.
    bool seesaw_fallback = false;
    std::size_t dim_ancilla = 0;      ///< 0: dim A * |X|
    std::size_t mother_outcomes = 0;  ///< 0: |X| * |I| (see-saw checkers)
    std::size_t seesaw_iterations = 150;
    /// Exclusivity: allow a different mother per (first, target) pair.
    bool per_pair = false;
};

Verdict check_povm_classical(const std::vector<Povm>& povms, const CompatConfig& cfg = {});
Verdict check_instrument_classical(const ProgrammableInstrument& pi, const CompatConfig& cfg = {});
Verdict check_parallel(const ProgrammableInstrument& pi, const CompatConfig& cfg = {});
Verdict check_q(const ProgrammableInstrument& pi, const CompatConfig& cfg = {});

/// Verdict on "first does not exclude second": Compatible means a
/// no-exclusion certificate was found.
Verdict excludes(const Instrument& first, const Instrument& second, const CompatConfig& cfg = {});

/// Compatible = non-exclusive. With `full`, Compatible means "not fully
/// exclusive" and Incompatible means every ordered pair is excluded.
Verdict check_exclusive(const ProgrammableInstrument& pi, const CompatConfig& cfg = {}, bool full = false);

Verdict check(Notion notion, const ProgrammableInstrument& pi, const CompatConfig& cfg = {});

/// Raised by hierarchy_report when two verdicts contradict an implication
/// between the notions. Signals a solver bug.
class ImplicationError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

struct HierarchyReport {
    std::optional<Verdict> classical;
    std::optional<Verdict> parallel;
    std::optional<Verdict> q;
    std::optional<Verdict> non_exclusive;
    bool povm_family = false;
};

HierarchyReport hierarchy_report(const ProgrammableInstrument& pi, const CompatConfig& cfg = {});
/// Throws ImplicationError naming the first violated implication.
void check_implications(const HierarchyReport& report);

// Independent reconstruction: Choi operators are rebuilt from the action of
// the certificate's maps on matrix units. Returns the root of the summed
// squared Frobenius errors over all programs and outcomes, or +inf when a
// component is not a valid instrument / channel / stochastic matrix.
double certificate_error(const ProgrammableInstrument& target, const ClassicalCertificate& cert);
double parallel_certificate_error(const ProgrammableInstrument& target, const ClassicalCertificate& cert);
double certificate_error(const ProgrammableInstrument& target, const QCompatCertificate& cert);
double certificate_error(const ProgrammableInstrument& target, const NoExclusionCertificate& cert);

/// Witness operators Z_{i,x} = sum_{k in group} y_k E_k on B_i (x) A, one
/// per (program, outcome), so that sum Tr(Z C) reproduces the witness value.
std::vector<std::vector<Matrix>> witness_blocks(const IncompatibilityWitness& w,
                                                const ProgrammableInstrument& target);

nlohmann::json to_json(const Verdict& v);

}  // namespace qincompat
