#include "qincompat/json_io.hpp"

#include <fstream>
#include <sstream>

namespace qincompat {

namespace {

template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

json systems_to_json(const Systems& systems) {
    json out = json::array();
    for (const auto& s : systems) out.push_back({{"name", s.name}, {"dim", s.dim}});
    return out;
}

Systems systems_from_json(const json& j) {
    return guarded("systems", [&] {
        Systems out;
        for (const auto& s : j) out.push_back({s.at("name").get<std::string>(), s.at("dim").get<std::size_t>()});
        return out;
    });
}

json matrix_to_json(const Matrix& m) {
    json re = json::array(), im = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json rr = json::array(), ii = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            rr.push_back(m(r, c).real());
            ii.push_back(m(r, c).imag());
        }
        re.push_back(std::move(rr));
        im.push_back(std::move(ii));
    }
    return {{"re", re}, {"im", im}};
}

Matrix matrix_from_json(const json& j) {
    return guarded("matrix", [&] {
        const auto& re = j.at("re");
        const auto n = static_cast<Eigen::Index>(re.size());
        const bool has_im = j.contains("im");
        Matrix m(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            if (re[r].size() != static_cast<std::size_t>(n)) throw ParseError("matrix: rows must be square");
            for (Eigen::Index c = 0; c < n; ++c)
                m(r, c) = cplx(re[r][c].get<double>(), has_im ? j.at("im")[r][c].get<double>() : 0.0);
        }
        return m;
    });
}

json to_json(const HermitianBlock& op) {
    json out = matrix_to_json(op.matrix());
    out["systems"] = systems_to_json(op.systems());
    return out;
}

HermitianBlock block_from_json(const json& j) {
    return guarded("operator", [&] { return HermitianBlock(systems_from_json(j.at("systems")), matrix_from_json(j)); });
}

json to_json(const Instrument& instrument) {
    json chois = json::array();
    for (const auto& c : instrument.chois) chois.push_back(matrix_to_json(c));
    json out{{"input", systems_to_json(instrument.input)},
             {"output", systems_to_json(instrument.output)},
             {"outcomes", instrument.outcomes},
             {"chois", chois}};
    if (!instrument.shape.empty()) out["shape"] = instrument.shape;
    return out;
}

Instrument instrument_from_json(const json& j) {
    return guarded("instrument", [&] {
        Instrument out;
        out.input = systems_from_json(j.at("input"));
        out.output = systems_from_json(j.at("output"));
        for (const auto& c : j.at("chois")) out.chois.push_back(matrix_from_json(c));
        if (j.contains("outcomes")) {
            out.outcomes = j.at("outcomes").get<std::vector<std::string>>();
        } else {
            for (std::size_t x = 0; x < out.chois.size(); ++x) out.outcomes.push_back(std::to_string(x));
        }
        if (j.contains("shape")) out.shape = j.at("shape").get<std::vector<std::size_t>>();
        const auto d = static_cast<Eigen::Index>(out.din() * out.dout());
        for (const auto& c : out.chois)
            if (c.rows() != d) throw ParseError("instrument: Choi size does not match input/output dimensions");
        return out;
    });
}

json to_json(const ProgrammableInstrument& pi) {
    json members = json::array();
    for (const auto& ins : pi.instruments) members.push_back(to_json(ins));
    return {{"programs", pi.programs}, {"instruments", members}};
}

ProgrammableInstrument family_from_json(const json& j) {
    return guarded("family", [&] {
        ProgrammableInstrument pi;
        for (const auto& ins : j.at("instruments")) pi.instruments.push_back(instrument_from_json(ins));
        if (j.contains("programs")) {
            pi.programs = j.at("programs").get<std::vector<std::string>>();
        } else {
            for (std::size_t i = 0; i < pi.instruments.size(); ++i) pi.programs.push_back(std::to_string(i));
        }
        return pi;
    });
}

json to_json(const StochasticMatrix& mu) {
    json data = json::array();
    for (std::size_t i = 0; i < mu.programs(); ++i) {
        json per_w = json::array();
        for (std::size_t w = 0; w < mu.mother_outcomes(); ++w) {
            json col = json::array();
            for (std::size_t x = 0; x < mu.outcomes(); ++x) col.push_back(mu(x, w, i));
            per_w.push_back(col);
        }
        data.push_back(per_w);
    }
    return {{"mu", data}};
}

StochasticMatrix stochastic_from_json(const json& j) {
    return guarded("stochastic matrix", [&] {
        const auto& d = j.at("mu");
        const std::size_t ni = d.size();
        const std::size_t nw = ni ? d[0].size() : 0;
        const std::size_t nx = nw ? d[0][0].size() : 0;
        StochasticMatrix mu(nx, nw, ni);
        for (std::size_t i = 0; i < ni; ++i)
            for (std::size_t w = 0; w < nw; ++w)
                for (std::size_t x = 0; x < nx; ++x) mu(x, w, i) = d[i][w][x].get<double>();
        return mu;
    });
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

ProgrammableInstrument load_family(const std::string& path) {
    const json j = load_json(path);
    if (j.contains("instruments")) return family_from_json(j);
    if (j.contains("chois")) {
        ProgrammableInstrument pi;
        pi.programs = {"0"};
        pi.instruments = {instrument_from_json(j)};
        return pi;
    }
    throw ParseError(path + ": neither a family nor an instrument");
}

void save_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace qincompat
