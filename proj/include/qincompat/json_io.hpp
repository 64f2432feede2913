#pragma once

// JSON encodings shared by the CLI, the Python module, and the tests.
//
//   matrix:      {"systems":[{"name":"A","dim":2}], "re":[[...]], "im":[[...]]}
//   instrument:  {"input":[systems], "output":[systems], "outcomes":[...], "chois":[matrix]}
//   family:      {"programs":[...], "instruments":[instrument]}
//
// Doubles are written in shortest round-trip form, so decoding an encoded
// value reproduces it bit for bit.

#include <string>

#include <json.hpp>

#include "qincompat/qobjects.hpp"

namespace qincompat {

using json = nlohmann::json;

/// Malformed JSON input.
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

json systems_to_json(const Systems& systems);
Systems systems_from_json(const json& j);

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);

json to_json(const HermitianBlock& op);
HermitianBlock block_from_json(const json& j);

json to_json(const Instrument& instrument);
Instrument instrument_from_json(const json& j);

json to_json(const ProgrammableInstrument& pi);
ProgrammableInstrument family_from_json(const json& j);

json to_json(const StochasticMatrix& mu);
StochasticMatrix stochastic_from_json(const json& j);

/// Accepts either a family or a single instrument (wrapped as one program).
ProgrammableInstrument load_family(const std::string& path);
json load_json(const std::string& path);
void save_json(const std::string& path, const json& j);

}  // namespace qincompat
