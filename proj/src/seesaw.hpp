#pragma once

// Alternating search for a mother H_w : A -> C and post-processings acting on
// C that reproduce a list of target instruments:
//
//   target_x = sum_w E^{(x,w)} o H_w.
//
// A target is "proportional" when E^{(x,w)} must factor as mu(x|w) D^{(x,w)}
// with D a channel (q-compatibility style post-processing); otherwise
// (E^{(x,w)})_x is an arbitrary instrument for each w (no-exclusion style
// recovery). Both are linear constraints on E:
//   sum_x Tr_B E^{(x,w)} = 1_C                          (always)
//   Tr_B E^{(x,w)} - Tr(E^{(x,w)}) 1_C / d_C = 0          (proportional only)
//
// The search only ever certifies: a solution is returned after an exact
// feasibility solve for E given H, never on the strength of the heuristic
// objective alone.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qincompat/feasibility.hpp"
#include "qincompat/qobjects.hpp"

namespace qincompat::detail {

struct SeesawTarget {
    Instrument instrument;
    bool proportional = true;
};

struct SeesawOptions {
    std::size_t dim_c = 0;
    std::size_t outcomes = 0;  ///< |W|
    std::size_t restarts = 20;
    std::size_t iterations = 150;
    std::uint64_t seed = 0;
    SolverConfig solver;
};

struct SeesawSolution {
    std::vector<Matrix> mother;                ///< H_w on C (x) A
    std::vector<std::vector<Matrix>> post;     ///< per target, index x * |W| + w, on B (x) C
    double objective = 0.0;
    std::size_t iterations = 0;
    std::string how;
};

std::optional<SeesawSolution> seesaw_search(const Systems& input, const std::vector<SeesawTarget>& targets,
                                            const SeesawOptions& opt, std::string* diagnostics = nullptr);

Matrix kron_plain(const Matrix& a, const Matrix& b);
/// Choi operator of rho -> K rho K^dag.
Matrix kraus_choi(const Matrix& k);

/// Choi operator of E o H for E : C -> B and H : A -> C.
Matrix compose_choi(const Matrix& e, const Matrix& h, std::size_t da, std::size_t dc, std::size_t db);

}  // namespace qincompat::detail
