#include "mhdd/logic_engine.hpp"

#include "mhdd/errors.hpp"
#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mhdd {

void LogicValue::validate() const {
    if (radix < 2 || radix > 4) throw std::invalid_argument("logic radix must be 2, 3 or 4");
    if (value < 0 || value >= radix)
        throw std::invalid_argument("logic value " + std::to_string(value) + " outside radix " + std::to_string(radix));
}

namespace {

LogicOptions child(const LogicOptions& opt, std::uint64_t index) {
    LogicOptions o = opt;
    if (opt.noise_seed) o.noise_seed = derive_seed(*opt.noise_seed, index);
    return o;
}

void check_bit(int b, const char* name) {
    if (b != 0 && b != 1) throw std::invalid_argument(std::string(name) + " must be 0 or 1");
}

void record(const LogicOptions& opt, const Waveform& wf) {
    if (opt.log) opt.log->push_back(wf);
}

ProgramOptions program_options(const LogicOptions& opt, int polarity = 0) {
    ProgramOptions o;
    o.noise_seed = opt.noise_seed;
    o.allowed_polarity = polarity;
    o.keep_waveforms = opt.log != nullptr;
    return o;
}

void program_into(UnitState& unit, int level, const LevelCodec& codec, const ModelParams& params,
                  const LogicOptions& opt, int polarity = 0) {
    auto rep = program_level(unit, level, codec, params, program_options(opt, polarity));
    unit = rep.state;
    if (opt.log)
        for (auto& wf : rep.waveforms) opt.log->push_back(std::move(wf));
}

}  // namespace

// ---------------------------------------------------------------------------

double zero_bias_conductance(const UnitState& unit, const ModelParams& params) {
    return read_conductance(unit, params, 0.0);
}

bool is_logic0(const UnitState& unit, const ModelParams& params) {
    return zero_bias_conductance(unit, params) >= logic0_min_S && std::abs(unit.x - x_pristine) < 0.05 &&
           std::abs(unit.c) < 0.05;
}

Waveform xor_pulse(double V_pq) {
    if (V_pq == 0.0) {
        auto wf = make_hold(0.0, 0.02);
        wf.label = "xor pulse 0 V";
        return wf;
    }
    auto wf = make_sweep(0.0, V_pq, 0.05, 0.02, false);
    wf.label = "xor pulse " + format_double(V_pq, 6) + " V";
    return wf;
}

XorResult xor_gate(UnitState& unit, int p, int q, const ModelParams& params, const LogicOptions& opt) {
    check_bit(p, "p");
    check_bit(q, "q");
    if (!is_logic0(unit, params)) throw precondition_violation("xor_gate: unit is not in the logic-0 state");
    const auto wf = xor_pulse(xor_pulse_V * (p - q));
    auto r = apply_waveform(unit, wf, params, opt.noise_seed);
    unit = r.state;
    record(opt, wf);
    const double G = r.trace.samples.back().G;
    return {std::abs(G) >= xor_threshold_S ? 0 : 1, G};
}

namespace {

constexpr double restore_V = 6.0;      // oxidation-restoring hold
constexpr double neutralize_V = 8.0;   // ion-cancelling pulse; redox is negligible at this duration
constexpr double restore_x_tol = 1e-3;

/// Shortest hold at V after which pred(state) becomes true; pred must switch once.
template <class Pred>
double hold_until(const UnitState& s, double V, const ModelParams& p, Pred pred) {
    double lo = 0.0, hi = 1e-15;
    while (!pred(step_dynamics(s, V, hi, p))) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e5) return -1.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (pred(step_dynamics(s, V, mid, p)))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

void apply_hold(UnitState& unit, double V, double t, const ModelParams& params, WaveformLog* log) {
    const auto wf = make_hold(V, t);
    unit = evolve(unit, wf, params);
    if (log) log->push_back(wf);
}

}  // namespace

void reset_to_logic0(UnitState& unit, const ModelParams& params, WaveformLog* log) {
    if (is_logic0(unit, params) && std::abs(unit.x - x_pristine) <= restore_x_tol) return;
    for (int round = 0; round < 4; ++round) {
        if (std::abs(unit.x - x_pristine) > restore_x_tol) {
            const bool raise = unit.x < x_pristine;
            const double V = raise ? restore_V : -restore_V;
            const double t = hold_until(unit, V, params, [&](const UnitState& s) {
                return raise ? s.x >= x_pristine : s.x <= x_pristine;
            });
            if (t <= 0.0) throw reset_failure("reset_to_logic0: oxidation state cannot be restored");
            apply_hold(unit, V, t, params, log);
        }
        if (unit.c != 0.0) {
            const bool positive = unit.c > 0.0;
            const double V = positive ? -neutralize_V : neutralize_V;
            const double t = hold_until(unit, V, params, [&](const UnitState& s) {
                return positive ? s.c <= 0.0 : s.c >= 0.0;
            });
            if (t <= 0.0) throw reset_failure("reset_to_logic0: ion displacement cannot be cancelled");
            apply_hold(unit, V, t, params, log);
        }
        if (std::abs(unit.x - x_pristine) <= restore_x_tol && is_logic0(unit, params)) return;
    }
    throw reset_failure("reset_to_logic0: restore did not verify (G0 = " +
                        format_double(zero_bias_conductance(unit, params), 6) + " S)");
}

// ---------------------------------------------------------------------------

void GateSpec::validate(const LevelCodec& codec) const {
    if (name.empty()) throw std::invalid_argument("gate spec needs a name");
    if (radix != 2) throw std::invalid_argument("gate spec '" + name + "': only radix 2 schedules are supported");
    if (steps.empty() || steps.size() > 2) throw std::invalid_argument("gate spec '" + name + "': needs 1 or 2 steps");
    if (init == Init::level && (init_level < 0 || init_level >= codec.n_used))
        throw std::invalid_argument("gate spec '" + name + "': init level out of range");
    if (high_is != 0 && high_is != 1) throw std::invalid_argument("gate spec '" + name + "': high_is must be 0 or 1");
    if (readout == Readout::pulse) {
        if (!(threshold_S > 0.0)) throw std::invalid_argument("gate spec '" + name + "': threshold_S must be positive");
        if (!(margin >= 1.0)) throw std::invalid_argument("gate spec '" + name + "': pulse margin must be >= 1");
        if (steps.back().kind != GateStep::Kind::pulse)
            throw std::invalid_argument("gate spec '" + name + "': pulse readout needs a final pulse step");
    } else {
        if (threshold_level <= 0 || threshold_level >= codec.n_used)
            throw std::invalid_argument("gate spec '" + name + "': threshold_level out of range");
        if (!(margin >= 0.0)) throw std::invalid_argument("gate spec '" + name + "': margin must be >= 0");
    }
    for (const auto& s : steps) {
        if (s.kind == GateStep::Kind::pulse) {
            if (!std::isfinite(s.Vp) || !std::isfinite(s.Vq) || std::abs(s.Vp) > 10.0 || std::abs(s.Vq) > 10.0)
                throw std::invalid_argument("gate spec '" + name + "': pulse voltages must lie within +-10 V");
        } else {
            if (s.input != 'p' && s.input != 'q') throw std::invalid_argument("gate spec '" + name + "': input must be p or q");
            if (s.when != 0 && s.when != 1) throw std::invalid_argument("gate spec '" + name + "': when must be 0 or 1");
            if (s.level < 0 || s.level >= codec.n_used)
                throw std::invalid_argument("gate spec '" + name + "': program level out of range");
        }
    }
}

std::string gate_spec_to_text(const GateSpec& spec) {
    std::ostringstream os;
    os << "name=" << spec.name << '\n' << "radix=" << spec.radix << '\n';
    os << "init=" << (spec.init == GateSpec::Init::logic0 ? "logic0" : "level:" + std::to_string(spec.init_level)) << '\n';
    os << "readout=" << (spec.readout == GateSpec::Readout::pulse ? "pulse" : "level") << '\n';
    os << "threshold_S=" << format_double(spec.threshold_S) << '\n';
    os << "threshold_level=" << spec.threshold_level << '\n';
    os << "high_is=" << spec.high_is << '\n';
    os << "margin=" << format_double(spec.margin) << '\n';
    os << "steps=" << spec.steps.size() << '\n';
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        const auto& s = spec.steps[i];
        const std::string k = "step" + std::to_string(i + 1) + ".";
        if (s.kind == GateStep::Kind::pulse) {
            os << k << "kind=pulse\n" << k << "Vp=" << format_double(s.Vp) << '\n' << k << "Vq=" << format_double(s.Vq) << '\n';
        } else {
            os << k << "kind=program\n" << k << "input=" << s.input << '\n' << k << "when=" << s.when << '\n'
               << k << "level=" << s.level << '\n';
        }
    }
    return os.str();
}

namespace {

int parse_int(const std::string& key, const std::string& v) {
    const double d = parse_double(v);
    if (d != std::floor(d) || std::abs(d) > 1e9) throw std::invalid_argument("'" + key + "' must be an integer");
    return static_cast<int>(d);
}

}  // namespace

GateSpec parse_gate_spec(const std::string& text) {
    auto kv = parse_key_values(text);
    GateSpec spec;
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    if (auto v = take("name")) spec.name = *v;
    if (auto v = take("radix")) spec.radix = parse_int("radix", *v);
    if (auto v = take("init")) {
        if (*v == "logic0") {
            spec.init = GateSpec::Init::logic0;
        } else if (v->rfind("level:", 0) == 0) {
            spec.init = GateSpec::Init::level;
            spec.init_level = parse_int("init", v->substr(6));
        } else {
            throw std::invalid_argument("init must be logic0 or level:<k>");
        }
    }
    if (auto v = take("readout")) {
        if (*v == "pulse") spec.readout = GateSpec::Readout::pulse;
        else if (*v == "level") spec.readout = GateSpec::Readout::level;
        else throw std::invalid_argument("readout must be pulse or level");
    }
    if (auto v = take("threshold_S")) spec.threshold_S = parse_double(*v);
    if (auto v = take("threshold_level")) spec.threshold_level = parse_int("threshold_level", *v);
    if (auto v = take("high_is")) spec.high_is = parse_int("high_is", *v);
    if (auto v = take("margin")) spec.margin = parse_double(*v);
    if (auto v = take("reference")) spec.reference = parse_int("reference", *v) != 0;
    const auto n = take("steps");
    if (!n) throw std::invalid_argument("gate spec needs 'steps'");
    const int steps = parse_int("steps", *n);
    if (steps < 1 || steps > 2) throw std::invalid_argument("gate spec needs 1 or 2 steps");
    for (int i = 1; i <= steps; ++i) {
        const std::string k = "step" + std::to_string(i) + ".";
        GateStep s;
        const auto kind = take(k + "kind");
        if (!kind) throw std::invalid_argument("missing '" + k + "kind'");
        if (*kind == "pulse") {
            s.kind = GateStep::Kind::pulse;
            if (auto v = take(k + "Vp")) s.Vp = parse_double(*v);
            if (auto v = take(k + "Vq")) s.Vq = parse_double(*v);
        } else if (*kind == "program") {
            s.kind = GateStep::Kind::program;
            if (auto v = take(k + "input")) {
                if (v->size() != 1) throw std::invalid_argument("'" + k + "input' must be p or q");
                s.input = (*v)[0];
            }
            if (auto v = take(k + "when")) s.when = parse_int(k + "when", *v);
            const auto level = take(k + "level");
            if (!level) throw std::invalid_argument("missing '" + k + "level'");
            s.level = parse_int(k + "level", *level);
        } else {
            throw std::invalid_argument("'" + k + "kind' must be pulse or program");
        }
        spec.steps.push_back(s);
    }
    if (!kv.empty()) throw std::invalid_argument("unknown gate spec key '" + kv.begin()->first + "'");
    spec.validate(LevelCodec{});
    return spec;
}

GateSpec load_gate_spec(const std::string& path) { return parse_gate_spec(read_file(path)); }

std::vector<std::string> reference_gate_names() { return {"AND", "OR", "NOT", "NAND", "NOR", "IMP", "XOR"}; }

GateSpec reference_gate(const std::string& name) {
    const LevelCodec codec;
    const int hi = codec.n_used - 1;
    GateSpec s;
    s.name = name;
    s.reference = true;
    if (name == "XOR") {
        s.init = GateSpec::Init::logic0;
        s.readout = GateSpec::Readout::pulse;
        s.threshold_S = xor_threshold_S;
        s.high_is = 0;
        s.steps.push_back({GateStep::Kind::pulse, xor_pulse_V, xor_pulse_V, 'p', 1, 0});
        return s;
    }
    s.readout = GateSpec::Readout::level;
    s.threshold_level = codec.n_used / 2;
    s.margin = 8.0;
    s.high_is = 1;
    auto program = [](char input, int when, int level) {
        GateStep st;
        st.kind = GateStep::Kind::program;
        st.input = input;
        st.when = when;
        st.level = level;
        return st;
    };
    if (name == "AND" || name == "NAND") {
        s.init = GateSpec::Init::level;
        s.init_level = hi;
        s.steps = {program('p', 0, 0), program('q', 0, 0)};
        s.high_is = name == "AND" ? 1 : 0;
    } else if (name == "OR" || name == "NOR") {
        s.init = GateSpec::Init::level;
        s.init_level = 0;
        s.steps = {program('p', 1, hi), program('q', 1, hi)};
        s.high_is = name == "OR" ? 1 : 0;
    } else if (name == "NOT") {
        s.init = GateSpec::Init::level;
        s.init_level = hi;
        s.steps = {program('p', 1, 0)};
    } else if (name == "IMP") {
        s.init = GateSpec::Init::level;
        s.init_level = hi;
        s.steps = {program('p', 1, 0), program('q', 1, hi)};
    } else {
        throw std::invalid_argument("no reference construction for gate '" + name + "'");
    }
    return s;
}

void prepare_gate(const GateSpec& spec, UnitState& unit, const LevelCodec& codec, const ModelParams& params,
                  const LogicOptions& opt) {
    spec.validate(codec);
    if (spec.init == GateSpec::Init::logic0)
        reset_to_logic0(unit, params, opt.log);
    else
        program_into(unit, spec.init_level, codec, params, opt);
}

namespace {

bool reading_valid(const LevelCodec& codec, const LevelReading& r) {
    const double gap = (codec.G_hi - codec.G_lo) / (codec.n_used - 1);
    return std::abs(r.G_measured - level_to_conductance(codec, r.level)) <= 0.5 * gap;
}

}  // namespace

GateResult boolean_gate(const GateSpec& spec, UnitState& unit, int p, int q, const LevelCodec& codec,
                        const ModelParams& params, const LogicOptions& opt) {
    spec.validate(codec);
    check_bit(p, "p");
    check_bit(q, "q");
    if (spec.init == GateSpec::Init::logic0) {
        if (!is_logic0(unit, params)) throw precondition_violation(spec.name + ": unit is not in the logic-0 state");
    } else {
        const auto r = read_level(unit, codec, params, child(opt, 100).noise_seed);
        if (r.level != spec.init_level || !reading_valid(codec, r))
            throw precondition_violation(spec.name + ": unit is not at its initial level");
    }
    double G = 0.0;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        const auto& s = spec.steps[i];
        const auto o = child(opt, i);
        if (s.kind == GateStep::Kind::pulse) {
            const auto wf = xor_pulse(s.Vp * p - s.Vq * q);
            auto r = apply_waveform(unit, wf, params, o.noise_seed);
            unit = r.state;
            record(opt, wf);
            G = r.trace.samples.back().G;
        } else if ((s.input == 'p' ? p : q) == s.when) {
            program_into(unit, s.level, codec, params, o);
        }
    }
    if (spec.readout == GateSpec::Readout::pulse) {
        const double a = std::abs(G);
        if (a > spec.threshold_S / spec.margin && a < spec.threshold_S * spec.margin && spec.margin > 1.0)
            throw decode_failure(spec.name + ": conductance " + format_double(G, 6) + " S inside the decode margin");
        return {a >= spec.threshold_S ? spec.high_is : 1 - spec.high_is, G};
    }
    const auto r = read_level(unit, codec, params, child(opt, 101).noise_seed);
    if (std::abs(r.level - spec.threshold_level) < spec.margin)
        throw decode_failure(spec.name + ": level " + std::to_string(r.level) + " inside the decode margin");
    return {r.level >= spec.threshold_level ? spec.high_is : 1 - spec.high_is, r.G_measured};
}

// ---------------------------------------------------------------------------

int logic_level(const LevelCodec& codec, const LogicValue& v) {
    v.validate();
    return static_cast<int>(std::lround(static_cast<double>(v.value) * (codec.n_used - 1) / (v.radix - 1)));
}

LogicValue logic_from_level(const LevelCodec& codec, int radix, int level) {
    LogicValue best{radix, 0};
    int best_d = std::abs(level - logic_level(codec, best));
    for (int v = 1; v < radix; ++v) {
        const int d = std::abs(level - logic_level(codec, {radix, v}));
        if (d < best_d) {
            best = {radix, v};
            best_d = d;
        }
    }
    return best;
}

void encode_logic(UnitState& unit, const LogicValue& v, const LevelCodec& codec, const ModelParams& params,
                  const LogicOptions& opt) {
    program_into(unit, logic_level(codec, v), codec, params, opt);
}

namespace {

LevelReading checked_read(const UnitState& unit, const LevelCodec& codec, const ModelParams& params,
                          const LogicOptions& opt) {
    const auto r = read_level(unit, codec, params, opt.noise_seed);
    if (!reading_valid(codec, r))
        throw decode_failure("stored conductance " + format_double(r.G_measured, 6) + " S does not decode to a level");
    return r;
}

void check_radix(const LogicValue& a, const LogicValue& b) {
    a.validate();
    b.validate();
    if (a.radix != b.radix) throw std::invalid_argument("logic radix mismatch");
}

LogicValue conditional_program(UnitState& unit, const LogicValue& p, const LogicValue& q, int polarity,
                               const LevelCodec& codec, const ModelParams& params, const LogicOptions& opt) {
    check_radix(p, q);
    const auto stored = checked_read(unit, codec, params, child(opt, 0));
    if (logic_from_level(codec, p.radix, stored.level) != p)
        throw precondition_violation("unit does not store the first operand");
    const int target = logic_level(codec, q);
    if ((polarity > 0 && target > stored.level) || (polarity < 0 && target < stored.level))
        program_into(unit, target, codec, params, child(opt, 1), polarity);
    const auto after = checked_read(unit, codec, params, child(opt, 2));
    return logic_from_level(codec, p.radix, after.level);
}

}  // namespace

LogicValue read_logic(const UnitState& unit, int radix, const LevelCodec& codec, const ModelParams& params,
                      const LogicOptions& opt) {
    return logic_from_level(codec, radix, checked_read(unit, codec, params, opt).level);
}

LogicValue mvl_max(UnitState& unit, const LogicValue& p, const LogicValue& q, const LevelCodec& codec,
                   const ModelParams& params, const LogicOptions& opt) {
    return conditional_program(unit, p, q, +1, codec, params, opt);
}

LogicValue mvl_min(UnitState& unit, const LogicValue& p, const LogicValue& q, const LevelCodec& codec,
                   const ModelParams& params, const LogicOptions& opt) {
    return conditional_program(unit, p, q, -1, codec, params, opt);
}

LogicValue mvl_threshold(UnitState& unit, const LogicValue& x, const LogicValue& k, const LevelCodec& codec,
                         const ModelParams& params, const LogicOptions& opt) {
    check_radix(x, k);
    const auto stored = checked_read(unit, codec, params, child(opt, 0));
    const int spacing = logic_level(codec, {k.radix, 1});
    const bool match = 2 * std::abs(stored.level - logic_level(codec, k)) < spacing;
    const LogicValue out{x.radix, match ? x.radix - 1 : 0};
    program_into(unit, logic_level(codec, out), codec, params, child(opt, 1));
    return out;
}

// ---------------------------------------------------------------------------

std::string CascadeExpr::to_string() const {
    switch (op) {
        case Op::constant: return std::to_string(value);
        case Op::variable: return name;
        default: break;
    }
    std::string head;
    switch (op) {
        case Op::max: head = "MAX"; break;
        case Op::min: head = "MIN"; break;
        case Op::threshold: head = "THR" + std::to_string(value); break;
        case Op::xor_: head = "XOR"; break;
        default: head = "NOT"; break;
    }
    std::string s = head + "(";
    for (std::size_t i = 0; i < args.size(); ++i) s += (i ? "," : "") + args[i]->to_string();
    return s + ")";
}

int CascadeExpr::gate_count() const {
    if (op == Op::constant || op == Op::variable) return 0;
    int n = 1;
    for (const auto& a : args) n += a->gate_count();
    return n;
}

int CascadeExpr::depth() const {
    int d = 0;
    for (const auto& a : args) d = std::max(d, a->depth());
    return (op == Op::constant || op == Op::variable) ? 0 : d + 1;
}

ExprPtr make_const(int value) {
    auto e = std::make_shared<CascadeExpr>();
    e->op = CascadeExpr::Op::constant;
    e->value = value;
    return e;
}

ExprPtr make_var(const std::string& name) {
    auto e = std::make_shared<CascadeExpr>();
    e->op = CascadeExpr::Op::variable;
    e->name = name;
    return e;
}

ExprPtr make_op(CascadeExpr::Op op, std::vector<ExprPtr> args, int k) {
    const std::size_t arity = (op == CascadeExpr::Op::threshold || op == CascadeExpr::Op::not_) ? 1 : 2;
    if (op == CascadeExpr::Op::constant || op == CascadeExpr::Op::variable)
        throw std::invalid_argument("make_op needs an operator");
    if (args.size() != arity) throw std::invalid_argument("wrong operand count");
    auto e = std::make_shared<CascadeExpr>();
    e->op = op;
    e->value = k;
    e->args = std::move(args);
    return e;
}

namespace {

/// Accepts call syntax, MAX(MIN(2,p),q), and s-expressions, (max (min 2 p) q).
class cascade_parser {
public:
    explicit cascade_parser(const std::string& s) : s_(s) {}

    ExprPtr parse() {
        skip();
        auto e = pos_ < s_.size() && s_[pos_] == '(' ? sexpr() : call();
        skip();
        if (pos_ != s_.size()) throw parse_error("unexpected trailing input", pos_);
        return e;
    }

private:
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool at_digit() const { return pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])); }

    ExprPtr number() {
        const std::size_t start = pos_;
        while (at_digit()) ++pos_;
        const std::string digits = s_.substr(start, pos_ - start);
        if (digits.size() > 6) throw parse_error("constant too large", start);
        return make_const(std::stoi(digits));
    }

    std::string word() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (pos_ == start) throw parse_error("expected an operator, constant or variable", start);
        return s_.substr(start, pos_ - start);
    }

    ExprPtr named(const std::string& w, std::vector<ExprPtr> args, std::size_t start) {
        std::string upper = w;
        for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        CascadeExpr::Op op;
        int k = 0;
        if (upper == "MAX") {
            op = CascadeExpr::Op::max;
        } else if (upper == "MIN") {
            op = CascadeExpr::Op::min;
        } else if (upper == "XOR") {
            op = CascadeExpr::Op::xor_;
        } else if (upper == "NOT") {
            op = CascadeExpr::Op::not_;
        } else if (upper.rfind("THR", 0) == 0) {
            std::string rest = upper.substr(upper.rfind("THRESHOLD", 0) == 0 ? 9 : 3);
            if (!rest.empty() && rest[0] == '_') rest.erase(0, 1);
            if (rest.empty() || rest.size() > 2 ||
                !std::all_of(rest.begin(), rest.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
                throw parse_error("threshold operator needs a level suffix, e.g. THR1", start);
            op = CascadeExpr::Op::threshold;
            k = std::stoi(rest);
        } else {
            throw parse_error("unknown operator '" + w + "'", start);
        }
        try {
            return make_op(op, std::move(args), k);
        } catch (const std::invalid_argument& e) {
            throw parse_error(std::string(e.what()) + " for '" + w + "'", start);
        }
    }

    ExprPtr call() {
        skip();
        if (at_digit()) return number();
        const std::size_t start = pos_;
        const std::string w = word();
        skip();
        if (pos_ >= s_.size() || s_[pos_] != '(') return make_var(w);
        ++pos_;
        std::vector<ExprPtr> args{call()};
        skip();
        while (pos_ < s_.size() && s_[pos_] == ',') {
            ++pos_;
            args.push_back(call());
            skip();
        }
        if (pos_ >= s_.size() || s_[pos_] != ')') throw parse_error("expected ')'", pos_);
        ++pos_;
        return named(w, std::move(args), start);
    }

    ExprPtr sexpr() {
        skip();
        if (pos_ >= s_.size()) throw parse_error("unexpected end of expression", pos_);
        if (s_[pos_] != '(') {
            if (at_digit()) return number();
            return make_var(word());
        }
        ++pos_;
        skip();
        const std::size_t start = pos_;
        const std::string w = word();
        std::vector<ExprPtr> args;
        for (;;) {
            skip();
            if (pos_ >= s_.size()) throw parse_error("expected ')'", pos_);
            if (s_[pos_] == ')') break;
            args.push_back(sexpr());
        }
        ++pos_;
        return named(w, std::move(args), start);
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

int leaf_value(const CascadeExpr& e, int radix, const std::map<std::string, int>& vars) {
    int v;
    if (e.op == CascadeExpr::Op::constant) {
        v = e.value;
    } else {
        const auto it = vars.find(e.name);
        if (it == vars.end()) throw std::invalid_argument("unbound variable '" + e.name + "'");
        v = it->second;
    }
    if (v < 0 || v >= radix) throw std::invalid_argument("operand " + std::to_string(v) + " outside the radix");
    return v;
}

void check_node(const CascadeExpr& e, int radix) {
    if ((e.op == CascadeExpr::Op::xor_ || e.op == CascadeExpr::Op::not_) && radix != 2)
        throw std::invalid_argument("XOR and NOT need radix 2");
    if (e.op == CascadeExpr::Op::threshold && (e.value < 0 || e.value >= radix))
        throw std::invalid_argument("threshold level outside the radix");
}

}  // namespace

ExprPtr parse_cascade(const std::string& text) { return cascade_parser(text).parse(); }

UnitState& UnitPool::acquire() {
    if (next_ >= units_.size()) throw pool_exhausted("unit pool exhausted after " + std::to_string(next_) + " units");
    return units_[next_++];
}

int cascade_reference(const CascadeExpr& e, int radix, const std::map<std::string, int>& vars) {
    if (radix < 2 || radix > 4) throw std::invalid_argument("radix must be 2, 3 or 4");
    if (e.op == CascadeExpr::Op::constant || e.op == CascadeExpr::Op::variable) return leaf_value(e, radix, vars);
    check_node(e, radix);
    const int a = cascade_reference(*e.args[0], radix, vars);
    switch (e.op) {
        case CascadeExpr::Op::max: return std::max(a, cascade_reference(*e.args[1], radix, vars));
        case CascadeExpr::Op::min: return std::min(a, cascade_reference(*e.args[1], radix, vars));
        case CascadeExpr::Op::threshold: return a == e.value ? radix - 1 : 0;
        case CascadeExpr::Op::xor_: return a ^ cascade_reference(*e.args[1], radix, vars);
        default: return 1 - a;
    }
}

int cascade_eval(const CascadeExpr& e, int radix, UnitPool& pool, const LevelCodec& codec, const ModelParams& params,
                 const std::map<std::string, int>& vars, const LogicOptions& opt) {
    if (radix < 2 || radix > 4) throw std::invalid_argument("radix must be 2, 3 or 4");
    if (e.op == CascadeExpr::Op::constant || e.op == CascadeExpr::Op::variable) return leaf_value(e, radix, vars);
    check_node(e, radix);
    std::vector<int> in;
    for (std::size_t i = 0; i < e.args.size(); ++i)
        in.push_back(cascade_eval(*e.args[i], radix, pool, codec, params, vars, child(opt, 10 + i)));
    UnitState& unit = pool.acquire();
    const auto o = child(opt, 0);
    switch (e.op) {
        case CascadeExpr::Op::max:
        case CascadeExpr::Op::min: {
            const LogicValue p{radix, in[0]}, q{radix, in[1]};
            encode_logic(unit, p, codec, params, child(o, 1));
            const auto r = e.op == CascadeExpr::Op::max ? mvl_max(unit, p, q, codec, params, child(o, 2))
                                                        : mvl_min(unit, p, q, codec, params, child(o, 2));
            return r.value;
        }
        case CascadeExpr::Op::threshold: {
            const LogicValue x{radix, in[0]};
            encode_logic(unit, x, codec, params, child(o, 1));
            return mvl_threshold(unit, x, {radix, e.value}, codec, params, child(o, 2)).value;
        }
        case CascadeExpr::Op::xor_:
            reset_to_logic0(unit, params, opt.log);
            return xor_gate(unit, in[0], in[1], params, child(o, 1)).output;
        default: {
            const auto spec = reference_gate("NOT");
            prepare_gate(spec, unit, codec, params, child(o, 1));
            return boolean_gate(spec, unit, in[0], 0, codec, params, child(o, 2)).output;
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<TruthRow> truth_table(const std::string& gate, int radix, const LevelCodec& codec,
                                  const ModelParams& params, const LogicOptions& opt) {
    std::string g = gate;
    for (auto& ch : g) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const bool mvl = g == "MAX" || g == "MIN" || g == "THRESHOLD";
    if (mvl && (radix < 2 || radix > 4)) throw std::invalid_argument(g + " needs radix 2, 3 or 4");
    if (!mvl && radix != 2) throw std::invalid_argument(g + " is a radix-2 gate");
    std::optional<GateSpec> spec;
    if (!mvl) spec = reference_gate(g);
    std::vector<TruthRow> rows;
    std::uint64_t index = 0;
    for (int p = 0; p < radix; ++p) {
        for (int q = 0; q < radix; ++q) {
            const auto o = child(opt, index++);
            UnitState unit;
            TruthRow row{p, q, 0.0, 0};
            if (!mvl) {
                prepare_gate(*spec, unit, codec, params, child(o, 0));
                const auto r = boolean_gate(*spec, unit, p, q, codec, params, child(o, 1));
                row.G_final = r.G;
                row.output = r.output;
            } else {
                const LogicValue a{radix, p}, b{radix, q};
                encode_logic(unit, a, codec, params, child(o, 0));
                LogicValue r;
                if (g == "MAX") r = mvl_max(unit, a, b, codec, params, child(o, 1));
                else if (g == "MIN") r = mvl_min(unit, a, b, codec, params, child(o, 1));
                else r = mvl_threshold(unit, a, b, codec, params, child(o, 1));
                row.G_final = read_level(unit, codec, params, child(o, 2).noise_seed).G_measured;
                row.output = r.value;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::string truth_table_csv(const std::vector<TruthRow>& rows) {
    std::ostringstream os;
    os << "p,q,G_final_S,output\n";
    for (const auto& r : rows) os << r.p << ',' << r.q << ',' << format_double(r.G_final, 12) << ',' << r.output << '\n';
    return os.str();
}

}  // namespace mhdd
