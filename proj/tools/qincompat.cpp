// qincompat command-line front end.
//
// Every command writes a JSON report to stdout (or --json-out) and a short
// table to stderr. Exit codes: 0 success, 1 semantic failure, 2 input error,
// 3 undecided where a decision was required.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "qincompat/compat.hpp"
#include "qincompat/fixtures.hpp"
#include "qincompat/games.hpp"
#include "qincompat/json_io.hpp"

using namespace qincompat;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kInputError = 2;
constexpr int kUndecided = 3;

struct RunConfig {
    double tol = 1e-7;
    double solver_tol = 0.0;  // 0: solver default
    std::uint64_t seed = 0;
    std::size_t restarts = 8;
    std::size_t dim_ancilla = 0;
    std::size_t max_iter = 0;  // 0: solver default
    std::string json_out;

    CompatConfig compat() const {
        CompatConfig c;
        c.tol = tol;
        c.seed = seed;
        c.restarts = restarts;
        c.dim_ancilla = dim_ancilla;
        if (solver_tol > 0.0) c.solver.tol = solver_tol;
        if (max_iter > 0) c.solver.max_iter = max_iter;
        return c;
    }

    GameConfig game() const {
        GameConfig g;
        g.seed = seed;
        g.restarts = restarts;
        if (max_iter > 0) g.qp_iterations = max_iter;
        g.compat = compat();
        return g;
    }
};

void emit(const RunConfig& rc, const json& report) {
    if (rc.json_out.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        save_json(rc.json_out, report);
    }
}

const char* mark(const std::optional<Verdict>& v) {
    if (!v) return "-";
    switch (v->status) {
    case VerdictStatus::Compatible: return "✓";
    case VerdictStatus::Incompatible: return "✗";
    case VerdictStatus::Undecided: return "?";
    }
    return "?";
}

int exit_for(VerdictStatus s) { return s == VerdictStatus::Undecided ? kUndecided : kOk; }

// ------------------------------------------------------------------ validate

int cmd_validate(const RunConfig& rc, const std::string& path) {
    const json j = load_json(path);
    json report{{"path", path}};
    Validation v;
    if (j.contains("instruments")) {
        report["kind"] = "family";
        v = validate(family_from_json(j), rc.tol);
    } else if (j.contains("chois")) {
        report["kind"] = "instrument";
        v = validate(instrument_from_json(j), rc.tol);
    } else {
        throw ParseError(path + ": neither a family nor an instrument");
    }
    report["valid"] = static_cast<bool>(v);
    if (!v) report["violation"] = v.violation;
    emit(rc, report);
    std::cerr << path << ": " << (v ? "valid" : v.violation) << "\n";
    return v ? kOk : kFailure;
}

// --------------------------------------------------------------------- check

int cmd_check(const RunConfig& rc, const std::string& notion, const std::string& path,
              const std::string& expect) {
    const ProgrammableInstrument pi = load_family(path);
    if (auto v = validate(pi, rc.tol); !v) {
        emit(rc, {{"path", path}, {"valid", false}, {"violation", v.violation}});
        std::cerr << path << ": " << v.violation << "\n";
        return kFailure;
    }
    const Verdict v = check(notion_from_string(notion), pi, rc.compat());
    emit(rc, to_json(v));
    std::cerr << std::left << std::setw(14) << to_string(v.notion) << to_string(v.status) << "  residual "
              << v.residual << "\n";
    if (!v.diagnostics.empty()) std::cerr << "  " << v.diagnostics << "\n";
    if (v.status == VerdictStatus::Undecided) return kUndecided;
    if (!expect.empty()) {
        const bool want = expect == "compatible";
        return (v.status == VerdictStatus::Compatible) == want ? kOk : kFailure;
    }
    return kOk;
}

// --------------------------------------------------------------------- games

GuessingGame load_game(const std::string& path) { return {load_family(path)}; }

int cmd_game_utility(const RunConfig& rc, const std::string& resource, const std::string& game_path,
                     const std::string& framework) {
    const Framework f = framework_from_string(framework);
    const ProgrammableInstrument pi = load_family(resource);
    const GuessingGame game = load_game(game_path);
    const UtilityReport rep = utility(pi, game, f, rc.game());
    const UtilityReport thr = free_threshold(game, f, rc.game());
    json report = to_json(rep);
    report["threshold"] = thr.value;
    report["advantage"] = rep.value - thr.value;
    emit(rc, report);
    std::cerr << "utility (" << to_string(f) << ")   " << std::setprecision(9) << rep.value << "\n"
              << "free threshold " << thr.value << "\n"
              << "advantage      " << rep.value - thr.value << "\n";
    return kOk;
}

int cmd_free_threshold(const RunConfig& rc, const std::string& game_path, const std::string& framework) {
    const Framework f = framework_from_string(framework);
    const UtilityReport rep = free_threshold(load_game(game_path), f, rc.game());
    emit(rc, to_json(rep));
    std::cerr << "free threshold (" << to_string(f) << ") " << std::setprecision(9) << rep.value << "\n";
    return kOk;
}

// Witness file: {"input":[systems], "output":[systems], "blocks":[[matrix]]}
// or a family file, whose incompatibility witness under --notion is used.
int cmd_witness_to_game(const RunConfig& rc, const std::string& path, const std::string& notion) {
    const json j = load_json(path);
    std::vector<std::vector<Matrix>> blocks;
    Systems input, output;
    json report;
    std::optional<double> margin;
    if (j.contains("blocks")) {
        input = systems_from_json(j.at("input"));
        output = systems_from_json(j.at("output"));
        for (const auto& row : j.at("blocks")) {
            blocks.emplace_back();
            for (const auto& m : row) blocks.back().push_back(matrix_from_json(m));
        }
    } else {
        const ProgrammableInstrument pi = load_family(path);
        const Verdict v = check(notion_from_string(notion), pi, rc.compat());
        if (v.status == VerdictStatus::Undecided) {
            emit(rc, to_json(v));
            std::cerr << "no decision for " << to_string(v.notion) << "; no witness\n";
            return kUndecided;
        }
        if (v.witnesses.empty()) {
            emit(rc, to_json(v));
            std::cerr << "family is " << to_string(v.status) << " without a witness\n";
            return kFailure;
        }
        blocks = witness_blocks(v.witnesses[0], pi);
        input = pi.input();
        output = pi.instruments[0].output;
        margin = v.witnesses[0].value;
        report["witness_value"] = v.witnesses[0].value;
        report["source"] = v.witnesses[0].source;
    }
    GameShift used;
    const GuessingGame game = witness_to_game(blocks, input, output, &used);
    report["game"] = to_json(game.referee);
    report["shift"] = {{"scale", used.scale}, {"shift", used.shift}, {"transpose", used.transpose}};
    if (margin) {
        const double n = static_cast<double>(game.referee.size() * total_dim(input) * total_dim(output));
        report["predicted_margin"] = *margin / (used.scale * n);
    }
    emit(rc, report);
    std::cerr << "game with " << game.referee.size() << " programs, scale " << used.scale << ", shift "
              << used.shift << "\n";
    return validate(game.referee, 1e-9) ? kOk : kFailure;
}

// ----------------------------------------------------------------- hierarchy

struct Expectation {
    std::optional<bool> classical, parallel, q, non_exclusive;
    bool q_never_compatible = false;
    bool povm_coincide = false;
};

struct Row {
    std::string name, group;
    ProgrammableInstrument family;
    Expectation expect;
};

std::vector<Row> table_rows(double eta) {
    auto f = fixtures(eta);
    std::vector<Row> rows;
    rows.push_back({"TRIPLE_EXCL", "instruments", f.at("TRIPLE_EXCL"), {}});
    rows.back().expect.non_exclusive = true;
    rows.back().expect.q_never_compatible = true;
    rows.push_back({"CLASSICAL_FREE", "instruments", f.at("CLASSICAL_FREE"), {true, true, true, true}});
    rows.push_back({"PAIR_ID", "channels", f.at("PAIR_ID"), {true, false, true, true}});
    rows.push_back({"PAIR_CONST", "channels", f.at("PAIR_CONST"), {false, true, true, true}});
    rows.push_back({"CHANNELS_RAND", "channels", f.at("CHANNELS_RAND"), {}});
    rows.back().expect.classical = false;
    rows.back().expect.q = true;
    rows.push_back({"POVM_XZ", "povm", f.at("POVM_XZ"), {}});
    rows.back().expect.povm_coincide = true;
    const double star = 1.0 / std::sqrt(2.0);
    if (std::abs(eta - star) > 1e-3) {
        const bool jm = eta < star;
        rows.back().expect.classical = rows.back().expect.parallel = rows.back().expect.q = jm;
    }
    return rows;
}

// kOk when `v` matches, kFailure on a contradiction, kUndecided when the
// expected decision was not reached.
int compare(const std::optional<Verdict>& v, const std::optional<bool>& want) {
    if (!want || !v) return kOk;
    if (v->status == VerdictStatus::Undecided) return kUndecided;
    return (v->status == VerdictStatus::Compatible) == *want ? kOk : kFailure;
}

int cmd_hierarchy(const RunConfig& rc, const std::string& only, double eta) {
    if (!only.empty() && only != "instruments" && only != "channels" && only != "povm")
        throw ParseError("--only expects instruments, channels or povm");
    const CompatConfig cfg = rc.compat();
    json rows = json::array();
    int code = kOk;
    auto worst = [&](int c) {
        if (c == kFailure || code == kFailure) code = kFailure;
        else if (c == kUndecided) code = kUndecided;
    };
    std::cerr << std::left << std::setw(13) << "group" << std::setw(16) << "family" << std::setw(11) << "classical"
              << std::setw(10) << "parallel" << std::setw(5) << "q" << std::setw(15) << "non-exclusive"
              << "expected\n";
    for (const Row& row : table_rows(eta)) {
        if (!only.empty() && row.group != only) continue;
        json entry{{"family", row.name}, {"group", row.group}};
        HierarchyReport r;
        try {
            r = hierarchy_report(row.family, cfg);
        } catch (const ImplicationError& e) {
            entry["error"] = e.what();
            rows.push_back(entry);
            std::cerr << row.name << ": " << e.what() << "\n";
            code = kFailure;
            continue;
        }
        int c = kOk;
        auto fold = [&](int x) {
            if (x == kFailure || c == kFailure) c = kFailure;
            else if (x == kUndecided) c = kUndecided;
        };
        fold(compare(r.classical, row.expect.classical));
        fold(compare(r.parallel, row.expect.parallel));
        fold(compare(r.q, row.expect.q));
        fold(compare(r.non_exclusive, row.expect.non_exclusive));
        if (row.expect.q_never_compatible && r.q && r.q->status == VerdictStatus::Compatible) fold(kFailure);
        if (row.expect.povm_coincide && r.classical && r.parallel && r.q) {
            const auto s = r.classical->status;
            if (r.parallel->status != s || r.q->status != s) fold(s == VerdictStatus::Undecided ? kUndecided : kFailure);
        }
        json verdicts;
        auto put = [&](const char* key, const std::optional<Verdict>& v) {
            if (v) verdicts[key] = {{"status", to_string(v->status)}, {"residual", v->residual}};
        };
        put("classical", r.classical);
        put("parallel", r.parallel);
        put("q", r.q);
        put("non_exclusive", r.non_exclusive);
        entry["verdicts"] = verdicts;
        entry["matches"] = c == kOk;
        rows.push_back(entry);
        worst(c);
        std::cerr << std::left << std::setw(13) << row.group << std::setw(16) << row.name << std::setw(13)
                  << mark(r.classical) << std::setw(12) << mark(r.parallel) << std::setw(7) << mark(r.q)
                  << std::setw(17) << mark(r.non_exclusive)
                  << (c == kOk ? "ok" : c == kUndecided ? "undecided" : "MISMATCH") << "\n";
    }
    emit(rc, {{"eta", eta}, {"rows", rows}, {"all_match", code == kOk}});
    return code;
}

// -------------------------------------------------------------- gen-examples

int cmd_gen_examples(const RunConfig& rc, const std::string& outdir, double eta) {
    std::filesystem::create_directories(outdir);
    json written = json::array();
    for (const auto& [name, family] : fixtures(eta)) {
        std::string file = name;
        for (auto& ch : file) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        const std::string path = (std::filesystem::path(outdir) / (file + ".json")).string();
        save_json(path, to_json(family));
        written.push_back(path);
        std::cerr << "wrote " << path << "\n";
    }
    emit(rc, {{"written", written}, {"eta", eta}});
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compatibility checks and guessing-game monotones for quantum instruments"};
    app.require_subcommand(1);
    RunConfig rc;
    app.add_option("--tol", rc.tol, "Validation and reconstruction tolerance")->check(CLI::PositiveNumber);
    app.add_option("--solver-tol", rc.solver_tol, "Convex solver tolerance")->check(CLI::PositiveNumber);
    app.add_option("--seed", rc.seed, "Random seed");
    app.add_option("--restarts", rc.restarts, "Random restarts for see-saw searches");
    app.add_option("--dim-ancilla", rc.dim_ancilla, "Mediating dimension (default dim A * |X|)");
    app.add_option("--max-iter", rc.max_iter, "Solver iteration limit");
    app.add_option("--json-out", rc.json_out, "Write the JSON report here instead of stdout");
    app.fallthrough();

    std::string path, notion = "classical", expect, resource, game, framework = "c", only, outdir = "examples_out";
    double eta = 1.0;

    auto* validate_cmd = app.add_subcommand("validate", "Check hermiticity, CP and TP of an instrument or family");
    validate_cmd->add_option("path", path, "JSON file")->required();

    auto* check_cmd = app.add_subcommand("check", "Decide a compatibility notion for a family");
    check_cmd->add_option("--notion", notion, "classical | parallel | q | exclusive")->required();
    check_cmd->add_option("--in", path, "Family JSON")->required();
    check_cmd->add_option("--expect", expect, "Exit 1 unless the verdict matches")
        ->check(CLI::IsMember({"compatible", "incompatible"}));

    auto* utility_cmd = app.add_subcommand("game-utility", "Utility of a resource in a guessing game");
    utility_cmd->add_option("--resource", resource, "Resource family JSON")->required();
    utility_cmd->add_option("--game", game, "Referee family JSON")->required();
    utility_cmd->add_option("--framework", framework, "c | q | ex")->check(CLI::IsMember({"c", "q", "ex"}));

    auto* threshold_cmd = app.add_subcommand("free-threshold", "Best score of a free family in a game");
    threshold_cmd->add_option("--game", game, "Referee family JSON")->required();
    threshold_cmd->add_option("--framework", framework, "c | q | ex")->check(CLI::IsMember({"c", "q", "ex"}));

    auto* witness_cmd = app.add_subcommand("witness-to-game", "Turn an incompatibility witness into a game");
    witness_cmd->add_option("--witness", path, "Witness blocks or a family to refute")->required();
    witness_cmd->add_option("--notion", notion, "Notion used when a family is given");

    auto* hierarchy_cmd = app.add_subcommand("hierarchy", "Reproduce the table of relations between notions");
    hierarchy_cmd->add_option("--only", only, "instruments | channels | povm");
    hierarchy_cmd->add_option("--eta", eta, "Visibility of the X/Z measurements")->check(CLI::Range(0.0, 1.0));

    auto* gen_cmd = app.add_subcommand("gen-examples", "Write the fixture families as JSON");
    gen_cmd->add_option("--out", outdir, "Output directory");
    gen_cmd->add_option("--eta", eta, "Visibility of the X/Z measurements")->check(CLI::Range(0.0, 1.0));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (*validate_cmd) return cmd_validate(rc, path);
        if (*check_cmd) return cmd_check(rc, notion, path, expect);
        if (*utility_cmd) return cmd_game_utility(rc, resource, game, framework);
        if (*threshold_cmd) return cmd_free_threshold(rc, game, framework);
        if (*witness_cmd) return cmd_witness_to_game(rc, path, notion);
        if (*hierarchy_cmd) return cmd_hierarchy(rc, only, eta);
        if (*gen_cmd) return cmd_gen_examples(rc, outdir, eta);
    } catch (const ImplicationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::runtime_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}
