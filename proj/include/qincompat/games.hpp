#pragma once

// Free superoperations, classical-quantum guessing games and their utilities.
//
// A protocol transforms a resource (programs i, outcomes x, A -> B) into a
// family (programs j, outcomes y, C -> D):
//
//   player I    applies pre_w : C -> A (x) M and sends w forward;
//   player II   receives j, draws (i, r) ~ choose(. | j, w), runs the resource
//               on program i, draws (y, k) ~ respond(. | j, w, i, r, x) and
//               sends k back (k is trivial in framework c);
//   player I    applies post^{(w,k,s)} : B (x) M -> D.
//
// Framework ex routes outcomes: only the resource program
// `resource_designated` reports its outcome to II, the other programs report
// to I (slot s = 1 + x, II sees x = 0). Post-processings are instruments whose
// outcome z is the final outcome of every output program except
// `designated`, whose outcome is II's y. In frameworks c and q the slot is
// always 0 and post-processings are channels.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qincompat/compat.hpp"
#include "qincompat/qobjects.hpp"
#include "qincompat/random.hpp"

namespace qincompat {

enum class Framework { C, Q, Ex };

std::string to_string(Framework f);
Framework framework_from_string(const std::string& s);
/// Compatibility notion whose families are free in the framework.
Notion free_notion(Framework f);

class ProtocolError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Conditional distribution p(out | cond), one row per condition.
struct Conditional {
    std::size_t conditions = 0;
    std::size_t outputs = 0;
    std::vector<double> p;

    Conditional() = default;
    Conditional(std::size_t conds, std::size_t outs) : conditions(conds), outputs(outs), p(conds * outs, 0.0) {}

    double& operator()(std::size_t c, std::size_t o) { return p[c * outputs + o]; }
    double operator()(std::size_t c, std::size_t o) const { return p[c * outputs + o]; }
    bool is_valid(double tol) const;
};

struct FreeProtocol {
    Framework framework = Framework::C;
    std::size_t programs = 1;             ///< |J|
    std::size_t outcomes = 1;             ///< |Y|
    std::size_t resource_programs = 1;    ///< |I|
    std::size_t resource_outcomes = 1;    ///< |X|
    std::size_t registers = 1;            ///< II's private register |R|
    std::size_t messages = 1;             ///< backward alphabet |K|
    std::size_t memory = 1;               ///< dim M
    std::size_t designated = 0;           ///< ex only
    std::size_t resource_designated = 0;  ///< ex only

    Instrument pre;  ///< C -> A (x) M, outcomes w
    Conditional choose;   ///< (j * |W| + w) -> (i * |R| + r)
    Conditional respond;  ///< (((j * |W| + w) * |I| + i) * |R| + r) * |X| + x -> y * |K| + k
    /// B (x) M -> D, index (w * |K| + k) * slots() + s. One outcome in
    /// frameworks c and q, |Y| outcomes in ex.
    std::vector<Instrument> post;

    std::size_t forward() const { return pre.size(); }
    std::size_t slots() const { return framework == Framework::Ex ? resource_outcomes + 1 : 1; }
    const Instrument& post_at(std::size_t w, std::size_t k, std::size_t s) const {
        return post[(w * messages + k) * slots() + s];
    }

    /// Throws ProtocolError naming the first violated invariant.
    void check(double tol = 1e-8) const;
};

/// The referee's family K_y^{(j)} : C -> D; programs are drawn uniformly.
struct GuessingGame {
    ProgrammableInstrument referee;
};

struct UtilityReport {
    double value = 0.0;
    Framework framework = Framework::C;
    FreeProtocol protocol;
    std::size_t restarts = 0;
    std::vector<double> restart_values;
    std::size_t iterations = 0;
    std::string diagnostics;
};

struct GameConfig {
    std::size_t restarts = 8;
    std::size_t iterations = 60;
    std::uint64_t seed = 0;
    std::size_t memory = 0;    ///< 0: dim C
    std::size_t forward = 0;   ///< 0: |X| |I|
    std::size_t backward = 0;  ///< 0: |X| |W|
    /// ex: fix the resource program reporting to II (default: search all).
    std::optional<std::size_t> resource_designated;
    /// ex: fix the output program answered by II (default: search all).
    std::optional<std::size_t> designated;
    std::size_t qp_iterations = 4000;
    CompatConfig compat;
};

/// Composite family as exact Choi operators.
ProgrammableInstrument apply_protocol(const FreeProtocol& t, const ProgrammableInstrument& pi);

/// sum_{j,y} <Phi+|(K_y^{(j)} (x) J_y^{(j)})(Phi+)|Phi+> / |J| with normalized
/// maximally entangled states; equals Tr(C_K^T C_J) / (|J| d_C d_D).
double score(const ProgrammableInstrument& family, const GuessingGame& game);
double evaluate(const FreeProtocol& t, const ProgrammableInstrument& pi, const GuessingGame& game);

/// Best protocol found by block-coordinate ascent over random restarts; a
/// lower bound on the utility.
UtilityReport utility(const ProgrammableInstrument& pi, const GuessingGame& game, Framework f,
                      const GameConfig& cfg = {});

/// Largest score of a free family, from the exact convex program over free
/// families; the reported protocol simulates the optimal family from the
/// trivial resource.
UtilityReport free_threshold(const GuessingGame& game, Framework f, const GameConfig& cfg = {});

/// Protocols creating a certified family from the trivial resource.
FreeProtocol simulate_free(const ProgrammableInstrument& target, const ClassicalCertificate& cert);
FreeProtocol simulate_free(const ProgrammableInstrument& target, const QCompatCertificate& cert);
FreeProtocol simulate_free(const ProgrammableInstrument& target, const NoExclusionCertificate& cert);
/// Runs the matching checker; throws ProtocolError without a certificate.
FreeProtocol simulate_free(Framework f, const ProgrammableInstrument& target, const CompatConfig& cfg = {});

/// apply(compose(outer, inner), pi) = apply(outer, apply(inner, pi)).
FreeProtocol compose_protocols(const FreeProtocol& outer, const FreeProtocol& inner);
/// Shared-randomness mixture: with probability `weight` run `a`, else `b`.
FreeProtocol mix_protocols(const FreeProtocol& a, const FreeProtocol& b, double weight);
/// Same transformation as a protocol of a larger framework (c -> q -> ex).
FreeProtocol embed(const FreeProtocol& t, Framework to);

/// Leaves the resource idle and hands `t` the trivial resource.
FreeProtocol discard_resource(const FreeProtocol& t, const ProgrammableInstrument& pi);
/// Passes programs, outcomes and systems straight through.
FreeProtocol identity_protocol(const ProgrammableInstrument& pi, Framework f);

struct GameShift {
    double scale = 1.0;         ///< K
    double shift = 0.0;         ///< c
    std::vector<Matrix> input;  ///< X_j on C (empty: zero)
    bool transpose = false;
};

/// Z_{j,y} -> (Z_{j,y} + 1 (x) X_j + c 1)/K, optionally transposed, taken as
/// the referee's Choi operators.
GuessingGame witness_to_game(const std::vector<std::vector<Matrix>>& z, const Systems& input, const Systems& output,
                             const GameShift& shift);
/// Automatic parameters: X_j cancels sum_y Tr_D Z_{j,y}, c is the smallest
/// shift making every block PSD, K restores normalization. The blocks are
/// transposed so that the score is proportional to sum Tr(Z C). Shorter
/// outcome lists are padded with copies of their last block. An all-zero
/// family gives the uniform game.
GuessingGame witness_to_game(const std::vector<std::vector<Matrix>>& z, const Systems& input, const Systems& output,
                             GameShift* used = nullptr);

struct MonotonicityResult {
    bool holds = false;
    double value = 0.0;     ///< utility found on apply(t, pi)
    double replayed = 0.0;  ///< compose(P*, t) evaluated on pi
    double residual = 0.0;
};

MonotonicityResult monotonicity_check(const FreeProtocol& t, const ProgrammableInstrument& pi,
                                      const GuessingGame& game, Framework f, const GameConfig& cfg = {},
                                      double tol = 1e-8);

struct ProtocolShape {
    std::size_t programs = 2, outcomes = 2;
    std::size_t resource_programs = 2, resource_outcomes = 2;
    std::size_t forward = 2, registers = 1, messages = 2, memory = 2;
    Systems input{{"C", 2}}, output{{"D", 2}};
    Systems resource_input{{"A", 2}}, resource_output{{"B", 2}};
};

FreeProtocol random_protocol(Framework f, const ProtocolShape& shape, Rng& rng);

nlohmann::json to_json(const FreeProtocol& t);
FreeProtocol protocol_from_json(const nlohmann::json& j);
nlohmann::json to_json(const UtilityReport& r);

}  // namespace qincompat
