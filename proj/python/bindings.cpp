// Python bindings. Matrices cross as complex numpy arrays; systems as
// (name, dim) tuples; structured reports as dicts via their JSON encoding.

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qincompat/compat.hpp"
#include "qincompat/fixtures.hpp"
#include "qincompat/games.hpp"
#include "qincompat/json_io.hpp"

namespace py = pybind11;
using namespace qincompat;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

CompatConfig compat_config(double tol, std::uint64_t seed, std::size_t restarts, std::size_t dim_ancilla,
                           std::size_t max_iter) {
    CompatConfig c;
    c.tol = tol;
    c.seed = seed;
    c.restarts = restarts;
    c.dim_ancilla = dim_ancilla;
    if (max_iter > 0) c.solver.max_iter = max_iter;
    return c;
}

GameConfig game_config(std::size_t restarts, std::size_t iterations, std::uint64_t seed) {
    GameConfig g;
    g.restarts = restarts;
    g.iterations = iterations;
    g.seed = seed;
    return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Quantum instrument compatibility and guessing-game monotones";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);

    py::class_<SystemLabel>(m, "System")
        .def(py::init([](std::string name, std::size_t dim) { return SystemLabel{std::move(name), dim}; }),
             py::arg("name"), py::arg("dim"))
        .def(py::init([](py::tuple t) { return SystemLabel{t[0].cast<std::string>(), t[1].cast<std::size_t>()}; }))
        .def_readwrite("name", &SystemLabel::name)
        .def_readwrite("dim", &SystemLabel::dim)
        .def("__repr__", [](const SystemLabel& s) { return "System('" + s.name + "', " + std::to_string(s.dim) + ")"; })
        .def("__eq__", [](const SystemLabel& a, const SystemLabel& b) { return a == b; });
    py::implicitly_convertible<py::tuple, SystemLabel>();

    py::class_<Instrument>(m, "Instrument")
        .def(py::init([](Systems in, Systems out, std::vector<Matrix> chois, std::vector<std::string> labels) {
                 Instrument ins;
                 ins.input = std::move(in);
                 ins.output = std::move(out);
                 if (labels.empty())
                     for (std::size_t x = 0; x < chois.size(); ++x) labels.push_back(std::to_string(x));
                 ins.outcomes = std::move(labels);
                 ins.chois = std::move(chois);
                 return ins;
             }),
             py::arg("input"), py::arg("output"), py::arg("chois"), py::arg("outcomes") = std::vector<std::string>{})
        .def_readwrite("input", &Instrument::input)
        .def_readwrite("output", &Instrument::output)
        .def_readwrite("outcomes", &Instrument::outcomes)
        .def_readwrite("chois", &Instrument::chois)
        .def_property_readonly("din", &Instrument::din)
        .def_property_readonly("dout", &Instrument::dout)
        .def("__len__", &Instrument::size)
        .def("validate", [](const Instrument& i, double tol) { return validate(i, tol).violation; },
             py::arg("tol") = 1e-9, "Empty string when valid, otherwise the first violated invariant.");

    py::class_<ProgrammableInstrument>(m, "Family")
        .def(py::init([](std::vector<Instrument> ins, std::vector<std::string> programs) {
                 ProgrammableInstrument pi;
                 if (programs.empty())
                     for (std::size_t i = 0; i < ins.size(); ++i) programs.push_back(std::to_string(i));
                 pi.programs = std::move(programs);
                 pi.instruments = std::move(ins);
                 return pi;
             }),
             py::arg("instruments"), py::arg("programs") = std::vector<std::string>{})
        .def_readwrite("programs", &ProgrammableInstrument::programs)
        .def_readwrite("instruments", &ProgrammableInstrument::instruments)
        .def("__len__", &ProgrammableInstrument::size)
        .def("validate", [](const ProgrammableInstrument& p, double tol) { return validate(p, tol).violation; },
             py::arg("tol") = 1e-9)
        .def("to_json", [](const ProgrammableInstrument& p) { return to_py(to_json(p)); })
        .def_static("from_json", [](const py::object& o) { return family_from_json(from_py(o)); });

    m.def("load_family", &load_family, py::arg("path"));
    m.def("fixtures", &fixtures, py::arg("eta") = 1.0, "The named fixture families.");
    m.def("trivial_resource", &trivial_resource);
    m.def("family_distance", &family_distance);

    // --------------------------------------------------------- compatibility
    m.def(
        "check",
        [](const std::string& notion, const ProgrammableInstrument& pi, double tol, std::uint64_t seed,
           std::size_t restarts, std::size_t dim_ancilla, std::size_t max_iter) {
            return to_py(to_json(check(notion_from_string(notion), pi,
                                       compat_config(tol, seed, restarts, dim_ancilla, max_iter))));
        },
        py::arg("notion"), py::arg("family"), py::arg("tol") = 1e-7, py::arg("seed") = 0, py::arg("restarts") = 20,
        py::arg("dim_ancilla") = 0, py::arg("max_iter") = 0,
        "Verdict for classical, parallel, q or exclusive compatibility, as a dict.");
    m.def(
        "hierarchy",
        [](const ProgrammableInstrument& pi, std::uint64_t seed) {
            CompatConfig cfg;
            cfg.seed = seed;
            const HierarchyReport r = hierarchy_report(pi, cfg);
            py::dict out;
            auto put = [&](const char* key, const std::optional<Verdict>& v) {
                out[key] = v ? py::cast(to_string(v->status)) : py::none();
            };
            put("classical", r.classical);
            put("parallel", r.parallel);
            put("q", r.q);
            put("non_exclusive", r.non_exclusive);
            return out;
        },
        py::arg("family"), py::arg("seed") = 0, "Status of every notion, keyed by notion.");

    // ----------------------------------------------------------------- games
    m.def(
        "score", [](const ProgrammableInstrument& f, const ProgrammableInstrument& referee) {
            return score(f, GuessingGame{referee});
        },
        py::arg("family"), py::arg("referee"));
    m.def(
        "utility",
        [](const ProgrammableInstrument& pi, const ProgrammableInstrument& referee, const std::string& framework,
           std::size_t restarts, std::size_t iterations, std::uint64_t seed) {
            const auto rep = utility(pi, GuessingGame{referee}, framework_from_string(framework),
                                     game_config(restarts, iterations, seed));
            return to_py(to_json(rep));
        },
        py::arg("resource"), py::arg("referee"), py::arg("framework") = "c", py::arg("restarts") = 8,
        py::arg("iterations") = 60, py::arg("seed") = 0);
    m.def(
        "free_threshold",
        [](const ProgrammableInstrument& referee, const std::string& framework) {
            return free_threshold(GuessingGame{referee}, framework_from_string(framework)).value;
        },
        py::arg("referee"), py::arg("framework") = "c");
    m.def(
        "witness_to_game",
        [](const std::vector<std::vector<Matrix>>& blocks, const Systems& input, const Systems& output) {
            GameShift used;
            auto game = witness_to_game(blocks, input, output, &used);
            return py::make_tuple(game.referee, used.scale, used.shift);
        },
        py::arg("blocks"), py::arg("input"), py::arg("output"),
        "Referee family plus the (scale, shift) used to normalize it.");
    m.def(
        "witness_game",
        [](const ProgrammableInstrument& pi, const std::string& notion) {
            const Verdict v = check(notion_from_string(notion), pi);
            if (v.witnesses.empty()) throw ProtocolError("no incompatibility witness (" + to_string(v.status) + ")");
            GameShift used;
            auto game = witness_to_game(witness_blocks(v.witnesses[0], pi), pi.input(), pi.instruments[0].output,
                                        &used);
            const double n = static_cast<double>(pi.size() * total_dim(pi.input()) * pi.instruments[0].dout());
            return py::make_tuple(game.referee, v.witnesses[0].value / (used.scale * n));
        },
        py::arg("family"), py::arg("notion") = "classical",
        "Game built from the family's witness and the score margin it guarantees.");
}
