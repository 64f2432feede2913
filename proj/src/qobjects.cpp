#include "qincompat/qobjects.hpp"

#include <algorithm>
#include <cmath>

namespace qincompat {

namespace {

std::string primed(std::string name, const Systems& taken) {
    auto clash = [&](const std::string& n) {
        return std::any_of(taken.begin(), taken.end(), [&](const auto& s) { return s.name == n; });
    };
    while (clash(name)) name += "'";
    return name;
}

std::vector<std::string> default_outcomes(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(std::to_string(k));
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// CpMap

CpMap::CpMap(Systems in, Systems out, Matrix c) : input(std::move(in)), output(std::move(out)), choi(std::move(c)) {
    validate_systems(input);
    validate_systems(output);
    const auto d = static_cast<Eigen::Index>(din() * dout());
    if (choi.rows() != d || choi.cols() != d)
        throw DimensionError("Choi operator size " + std::to_string(choi.rows()) + " does not match " +
                             std::to_string(dout()) + "x" + std::to_string(din()));
}

HermitianBlock CpMap::choi_block() const {
    Systems in = input;
    for (auto& s : in) s.name = primed(s.name, output);
    return {concat(output, in), choi};
}

Matrix CpMap::input_marginal() const { return trace_head(choi, dout()); }

bool CpMap::is_cp(double tol) const { return min_eigenvalue(choi) >= -tol; }

bool CpMap::is_trace_preserving(double tol) const {
    const auto d = static_cast<Eigen::Index>(din());
    return (input_marginal() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= tol;
}

CpMap CpMap::identity(const Systems& s) {
    const std::size_t d = total_dim(s);
    return {s, s, max_entangled(d).first.matrix()};
}

CpMap CpMap::from_kraus(const Systems& in, const Systems& out, const std::vector<Matrix>& kraus) {
    const auto din = static_cast<Eigen::Index>(total_dim(in));
    const auto dout = static_cast<Eigen::Index>(total_dim(out));
    Matrix choi = Matrix::Zero(din * dout, din * dout);
    for (const auto& k : kraus) {
        if (k.rows() != dout || k.cols() != din) throw DimensionError("Kraus operator has wrong shape");
        // (K (x) 1)|Omega> = sum_m K|m> (x) |m>
        Vector v(din * dout);
        for (Eigen::Index b = 0; b < dout; ++b)
            for (Eigen::Index a = 0; a < din; ++a) v(b * din + a) = k(b, a);
        choi += v * v.adjoint();
    }
    return {in, out, choi};
}

CpMap CpMap::trace_and_prepare(const Systems& in, const HermitianBlock& sigma) {
    const auto din = static_cast<Eigen::Index>(total_dim(in));
    const Matrix& s = sigma.matrix();
    Matrix choi(s.rows() * din, s.cols() * din);
    for (Eigen::Index r = 0; r < s.rows(); ++r)
        for (Eigen::Index c = 0; c < s.cols(); ++c)
            choi.block(r * din, c * din, din, din) = s(r, c) * Matrix::Identity(din, din);
    return {in, sigma.systems(), choi};
}

CpMap CpMap::zero(const Systems& in, const Systems& out) {
    const auto d = static_cast<Eigen::Index>(total_dim(in) * total_dim(out));
    return {in, out, Matrix::Zero(d, d)};
}

Channel::Channel(CpMap m, double tol) : map(std::move(m)) {
    if (auto v = validate(map, tol); !v) throw std::invalid_argument(v.violation);
    if (!map.is_trace_preserving(tol)) throw std::invalid_argument("not trace-preserving");
}

// ---------------------------------------------------------------------------
// Instrument, Povm, ProgrammableInstrument

Matrix Instrument::sum_choi() const {
    const auto d = static_cast<Eigen::Index>(din() * dout());
    Matrix s = Matrix::Zero(d, d);
    for (const auto& c : chois) s += c;
    return s;
}

Instrument Instrument::from_maps(const std::vector<CpMap>& maps, std::vector<std::string> outcomes) {
    if (maps.empty()) throw std::invalid_argument("instrument needs at least one outcome");
    Instrument out;
    out.input = maps.front().input;
    out.output = maps.front().output;
    for (const auto& m : maps) {
        if (m.input != out.input || m.output != out.output)
            throw LabelError("instrument maps must share input and output systems");
        out.chois.push_back(m.choi);
    }
    out.outcomes = outcomes.empty() ? default_outcomes(maps.size()) : std::move(outcomes);
    if (out.outcomes.size() != out.chois.size()) throw DimensionError("outcome labels do not match maps");
    return out;
}

Instrument Instrument::from_channel(const CpMap& channel) { return from_maps({channel}); }

Instrument Instrument::padded(std::size_t n) const {
    Instrument out = *this;
    out.shape.clear();
    const auto d = static_cast<Eigen::Index>(din() * dout());
    while (out.chois.size() < n) {
        out.chois.push_back(Matrix::Zero(d, d));
        out.outcomes.push_back(std::to_string(out.chois.size() - 1));
    }
    return out;
}

Instrument Povm::as_instrument() const {
    Instrument out;
    out.input = system;
    out.output = {{"trivial", 1}};
    out.outcomes = outcomes.empty() ? default_outcomes(effects.size()) : outcomes;
    for (const auto& e : effects) out.chois.push_back(e.transpose());
    return out;
}

std::size_t ProgrammableInstrument::max_outcomes() const {
    std::size_t n = 0;
    for (const auto& ins : instruments) n = std::max(n, ins.size());
    return n;
}

bool ProgrammableInstrument::common_output() const {
    return std::all_of(instruments.begin(), instruments.end(),
                       [&](const auto& ins) { return total_dim(ins.output) == total_dim(instruments[0].output); });
}

bool ProgrammableInstrument::all_channels() const {
    return std::all_of(instruments.begin(), instruments.end(), [](const auto& ins) { return ins.size() == 1; });
}

ProgrammableInstrument ProgrammableInstrument::padded() const {
    ProgrammableInstrument out = *this;
    const std::size_t n = max_outcomes();
    for (auto& ins : out.instruments) ins = ins.padded(n);
    return out;
}

ProgrammableInstrument ProgrammableInstrument::from_povms(const std::vector<Povm>& povms) {
    ProgrammableInstrument out;
    for (std::size_t i = 0; i < povms.size(); ++i) {
        out.programs.push_back(std::to_string(i));
        out.instruments.push_back(povms[i].as_instrument());
    }
    return out;
}

// ---------------------------------------------------------------------------
// StochasticMatrix

StochasticMatrix::StochasticMatrix(std::size_t outcomes, std::size_t mother_outcomes, std::size_t programs)
    : nx_(outcomes), nw_(mother_outcomes), ni_(programs), data_(outcomes * mother_outcomes * programs, 0.0) {}

bool StochasticMatrix::is_valid(double tol) const { return static_cast<bool>(validate(*this, tol)); }

// ---------------------------------------------------------------------------
// Validation

Validation validate(const CpMap& map, double tol) {
    if ((map.choi - map.choi.adjoint()).cwiseAbs().maxCoeff() > tol) return {"not hermitian"};
    if (!map.is_cp(tol)) return {"not completely positive"};
    return {};
}

Validation validate(const Instrument& instrument, double tol) {
    if (instrument.chois.empty()) return {"instrument has no outcomes"};
    if (instrument.outcomes.size() != instrument.chois.size()) return {"outcome labels do not match maps"};
    if (!instrument.shape.empty()) {
        std::size_t prod = 1;
        for (auto s : instrument.shape) prod *= s;
        if (prod != instrument.size()) return {"declared outcome shape does not match outcome count"};
    }
    const auto d = static_cast<Eigen::Index>(instrument.din() * instrument.dout());
    for (std::size_t x = 0; x < instrument.size(); ++x) {
        if (instrument.chois[x].rows() != d || instrument.chois[x].cols() != d)
            return {"Choi operator of outcome " + instrument.outcomes[x] + " has wrong size"};
        if (auto v = validate(instrument.map(x), tol); !v) return v;
    }
    const auto din = static_cast<Eigen::Index>(instrument.din());
    const Matrix marginal = trace_head(instrument.sum_choi(), instrument.dout());
    if ((marginal - Matrix::Identity(din, din)).cwiseAbs().maxCoeff() > tol) return {"not trace-preserving"};
    return {};
}

Validation validate(const Povm& povm, double tol) {
    const auto d = static_cast<Eigen::Index>(total_dim(povm.system));
    Matrix sum = Matrix::Zero(d, d);
    for (const auto& e : povm.effects) {
        if (e.rows() != d || e.cols() != d) return {"effect has wrong size"};
        if ((e - e.adjoint()).cwiseAbs().maxCoeff() > tol) return {"not hermitian"};
        if (min_eigenvalue(e) < -tol) return {"effect is not positive"};
        sum += e;
    }
    if ((sum - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() > tol) return {"effects do not sum to identity"};
    return {};
}

Validation validate(const ProgrammableInstrument& pi, double tol) {
    if (pi.instruments.empty()) return {"programmable instrument has no programs"};
    if (pi.programs.size() != pi.instruments.size()) return {"program labels do not match instruments"};
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (total_dim(pi.instruments[i].input) != total_dim(pi.input())) return {"programs differ in input dimension"};
        if (auto v = validate(pi.instruments[i], tol); !v)
            return {v.violation + " (program " + pi.programs[i] + ")"};
    }
    return {};
}

Validation validate(const StochasticMatrix& mu, double tol) {
    for (std::size_t i = 0; i < mu.programs(); ++i)
        for (std::size_t w = 0; w < mu.mother_outcomes(); ++w) {
            double s = 0.0;
            for (std::size_t x = 0; x < mu.outcomes(); ++x) {
                if (mu(x, w, i) < -tol) return {"negative conditional probability"};
                s += mu(x, w, i);
            }
            if (std::abs(s - 1.0) > tol) return {"conditional distribution does not sum to one"};
        }
    return {};
}

// ---------------------------------------------------------------------------
// Actions

Matrix apply(const CpMap& map, const Matrix& rho) {
    const auto din = static_cast<Eigen::Index>(map.din());
    const auto dout = static_cast<Eigen::Index>(map.dout());
    if (rho.rows() != din || rho.cols() != din) throw DimensionError("apply: input has wrong dimension");
    Matrix out = Matrix::Zero(dout, dout);
    for (Eigen::Index b = 0; b < dout; ++b)
        for (Eigen::Index bp = 0; bp < dout; ++bp) {
            cplx acc = 0.0;
            for (Eigen::Index a = 0; a < din; ++a)
                for (Eigen::Index ap = 0; ap < din; ++ap) acc += map.choi(b * din + a, bp * din + ap) * rho(a, ap);
            out(b, bp) = acc;
        }
    return out;
}

HermitianBlock apply(const CpMap& map, const HermitianBlock& rho) {
    if (dims_of(rho.systems()) != dims_of(map.input)) throw DimensionError("apply: input lives on other systems");
    return {map.output, apply(map, rho.matrix())};
}

Matrix choi_to_liouville(const Matrix& choi, std::size_t din_, std::size_t dout_) {
    const auto din = static_cast<Eigen::Index>(din_);
    const auto dout = static_cast<Eigen::Index>(dout_);
    Matrix l(dout * dout, din * din);
    for (Eigen::Index b = 0; b < dout; ++b)
        for (Eigen::Index bp = 0; bp < dout; ++bp)
            for (Eigen::Index a = 0; a < din; ++a)
                for (Eigen::Index ap = 0; ap < din; ++ap) l(b * dout + bp, a * din + ap) = choi(b * din + a, bp * din + ap);
    return l;
}

Matrix liouville_to_choi(const Matrix& l, std::size_t din_, std::size_t dout_) {
    const auto din = static_cast<Eigen::Index>(din_);
    const auto dout = static_cast<Eigen::Index>(dout_);
    Matrix c(dout * din, dout * din);
    for (Eigen::Index b = 0; b < dout; ++b)
        for (Eigen::Index bp = 0; bp < dout; ++bp)
            for (Eigen::Index a = 0; a < din; ++a)
                for (Eigen::Index ap = 0; ap < din; ++ap) c(b * din + a, bp * din + ap) = l(b * dout + bp, a * din + ap);
    return c;
}

CpMap compose(const CpMap& second, const CpMap& first) {
    if (dims_of(second.input) != dims_of(first.output))
        throw LabelError("compose: output of first map does not match input of second");
    const Matrix l = choi_to_liouville(second.choi, second.din(), second.dout()) *
                     choi_to_liouville(first.choi, first.din(), first.dout());
    return {first.input, second.output, liouville_to_choi(l, first.din(), second.dout())};
}

CpMap tensor(const CpMap& f, const CpMap& g) {
    const Matrix k = kron(HermitianBlock({{"a", f.dout() * f.din()}}, f.choi),
                          HermitianBlock({{"b", g.dout() * g.din()}}, g.choi))
                         .matrix();
    const Matrix c = permute_factors(k, {f.dout(), f.din(), g.dout(), g.din()}, {0, 2, 1, 3});
    return {concat(f.input, g.input), concat(f.output, g.output), c};
}

Channel extended_channel(const Instrument& instrument, const std::string& pointer) {
    const std::size_t n = instrument.size();
    const SystemLabel ptr{primed(pointer, concat(instrument.output, {})), n};
    Systems out = instrument.output;
    out.push_back(ptr);
    const auto d = static_cast<Eigen::Index>(instrument.dout() * n * instrument.din());
    Matrix choi = Matrix::Zero(d, d);
    for (std::size_t x = 0; x < n; ++x) {
        const Matrix k = kron(HermitianBlock({{"c", instrument.dout() * instrument.din()}}, instrument.chois[x]),
                              HermitianBlock::ket_bra(ptr, x, x))
                             .matrix();
        choi += permute_factors(k, {instrument.dout(), instrument.din(), n}, {0, 2, 1});
    }
    return Channel(CpMap(instrument.input, out, choi), 1e-8);
}

Povm induced_povm(const Instrument& instrument) {
    Povm p;
    p.system = instrument.input;
    p.outcomes = instrument.outcomes;
    for (const auto& c : instrument.chois) p.effects.push_back(trace_head(c, instrument.dout()).transpose());
    return p;
}

Instrument marginal_instrument(const Instrument& mother, std::size_t keep) {
    if (mother.shape.empty()) throw std::invalid_argument("marginal_instrument: outcome set is not declared as a product");
    if (keep >= mother.shape.size()) throw std::out_of_range("marginal_instrument: coordinate out of range");
    std::size_t stride = 1;
    for (std::size_t k = keep + 1; k < mother.shape.size(); ++k) stride *= mother.shape[k];
    const std::size_t n = mother.shape[keep];

    Instrument out;
    out.input = mother.input;
    out.output = mother.output;
    out.outcomes = default_outcomes(n);
    const auto d = static_cast<Eigen::Index>(mother.din() * mother.dout());
    out.chois.assign(n, Matrix::Zero(d, d));
    for (std::size_t w = 0; w < mother.size(); ++w) out.chois[(w / stride) % n] += mother.chois[w];
    return out;
}

ProgrammableInstrument post_process_classical(const Instrument& mother, const StochasticMatrix& mu) {
    if (mu.mother_outcomes() != mother.size())
        throw DimensionError("post_process_classical: mu is not indexed by the mother's outcomes");
    ProgrammableInstrument out;
    const auto d = static_cast<Eigen::Index>(mother.din() * mother.dout());
    for (std::size_t i = 0; i < mu.programs(); ++i) {
        Instrument ins;
        ins.input = mother.input;
        ins.output = mother.output;
        ins.outcomes = default_outcomes(mu.outcomes());
        ins.chois.assign(mu.outcomes(), Matrix::Zero(d, d));
        for (std::size_t x = 0; x < mu.outcomes(); ++x)
            for (std::size_t w = 0; w < mother.size(); ++w) ins.chois[x] += mu(x, w, i) * mother.chois[w];
        out.programs.push_back(std::to_string(i));
        out.instruments.push_back(std::move(ins));
    }
    return out;
}

double family_distance(const ProgrammableInstrument& a, const ProgrammableInstrument& b) {
    if (a.size() != b.size()) throw DimensionError("family_distance: program counts differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& ia = a.instruments[i];
        const auto& ib = b.instruments[i];
        if (ia.din() != ib.din() || ia.dout() != ib.dout()) throw DimensionError("family_distance: systems differ");
        const std::size_t n = std::max(ia.size(), ib.size());
        const auto d = static_cast<Eigen::Index>(ia.din() * ia.dout());
        for (std::size_t x = 0; x < n; ++x) {
            const Matrix ca = x < ia.size() ? ia.chois[x] : Matrix::Zero(d, d);
            const Matrix cb = x < ib.size() ? ib.chois[x] : Matrix::Zero(d, d);
            acc += (ca - cb).squaredNorm();
        }
    }
    return std::sqrt(acc);
}

}  // namespace qincompat
