#pragma once

#include "mhdd/device_model.hpp"
#include "mhdd/level_codec.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mhdd {

/// Waveforms applied to a unit, in order; used to audit gate schedules.
using WaveformLog = std::vector<Waveform>;

struct LogicOptions {
    std::optional<std::uint64_t> noise_seed;  ///< noisy reads when set
    WaveformLog* log = nullptr;
};

struct LogicValue {
    int radix = 2;
    int value = 0;

    void validate() const;
    bool operator==(const LogicValue&) const = default;
};

// ---------------------------------------------------------------------------
// Single-unit XOR and the logic-0 state

/// Decode threshold between the "0" (high) and "1" (low) conductances of the XOR gate, S.
inline constexpr double xor_threshold_S = 1e-9;
inline constexpr double xor_pulse_V = 2.5;
/// Conductance floor of the logic-0 state at the zero-bias read, S.
inline constexpr double logic0_min_S = 10e-9;

/// Zero-bias conductance (read at +eps_read).
double zero_bias_conductance(const UnitState& unit, const ModelParams& params);

/// Logic-0: positive zero-bias conductance of at least 10 nS with (x, c) near pristine.
bool is_logic0(const UnitState& unit, const ModelParams& params);

/// The single programming pulse of an XOR evaluation: a 0 -> V_pq ramp (0.05 V steps,
/// 20 ms dwell), or a 20 ms 0 V hold when V_pq = 0.
Waveform xor_pulse(double V_pq);

struct XorResult {
    int output = 0;
    double G = 0.0;  ///< conductance read at the end of the pulse, S
};

/// Applies V_pq = 2.5 V * (p - q) as one pulse and decodes |G| >= 1 nS as 0.
/// Throws precondition_violation unless the unit is in logic-0.
XorResult xor_gate(UnitState& unit, int p, int q, const ModelParams& params, const LogicOptions& opt = {});

/// Restores logic-0 with a planned bias hold (oxidation) and a short opposite-polarity
/// pulse that cancels the ion displacement. A unit already in logic-0 is left untouched.
/// Throws reset_failure when the restore does not verify.
void reset_to_logic0(UnitState& unit, const ModelParams& params, WaveformLog* log = nullptr);

// ---------------------------------------------------------------------------
// Configurable Boolean gates

struct GateStep {
    enum class Kind { pulse, program };
    Kind kind = Kind::pulse;
    double Vp = 0.0;      ///< pulse: volts applied to terminal p when p = 1
    double Vq = 0.0;      ///< pulse: volts applied to terminal q when q = 1
    char input = 'p';     ///< program: which input gates the step
    int when = 1;         ///< program: input value that triggers the step
    int level = 0;        ///< program: codec level written
};

/// key=value gate description. Keys: name, radix (2), init (logic0 | level:<k>),
/// readout (pulse | level), threshold_S, threshold_level, high_is, margin, steps,
/// step<i>.kind (pulse | program), step<i>.Vp, step<i>.Vq, step<i>.input, step<i>.when, step<i>.level.
struct GateSpec {
    enum class Init { logic0, level };
    enum class Readout { pulse, level };

    std::string name;
    int radix = 2;
    Init init = Init::logic0;
    int init_level = 0;
    Readout readout = Readout::pulse;
    double threshold_S = xor_threshold_S;
    int threshold_level = 32;
    int high_is = 0;          ///< output when the read lies above the threshold
    double margin = 2.0;      ///< pulse: undecodable band [t/margin, t*margin]; level: +- levels around threshold_level
    std::vector<GateStep> steps;
    bool reference = false;   ///< constructed default, not a transcribed schedule

    void validate(const LevelCodec& codec) const;
};

std::string gate_spec_to_text(const GateSpec& spec);
GateSpec parse_gate_spec(const std::string& text);
GateSpec load_gate_spec(const std::string& path);

/// Reference constructions for AND, OR, NOT, NAND, NOR, IMP and XOR.
GateSpec reference_gate(const std::string& name);
std::vector<std::string> reference_gate_names();

/// Brings the unit into the spec's initial state.
void prepare_gate(const GateSpec& spec, UnitState& unit, const LevelCodec& codec, const ModelParams& params,
                  const LogicOptions& opt = {});

struct GateResult {
    int output = 0;
    double G = 0.0;  ///< pulse readout: in-pulse conductance; level readout: G_level
};

/// Runs the schedule on a unit already in the initial state. Throws precondition_violation
/// when it is not, decode_failure when the final read falls inside the margin band.
GateResult boolean_gate(const GateSpec& spec, UnitState& unit, int p, int q, const LevelCodec& codec,
                        const ModelParams& params, const LogicOptions& opt = {});

// ---------------------------------------------------------------------------
// Multi-valued logic

/// Codec level of a logic value: round(value * (n_used - 1) / (radix - 1)).
int logic_level(const LevelCodec& codec, const LogicValue& v);
/// Nearest logic value of a decoded codec level.
LogicValue logic_from_level(const LevelCodec& codec, int radix, int level);

/// Programs the unit to the level of v.
void encode_logic(UnitState& unit, const LogicValue& v, const LevelCodec& codec, const ModelParams& params,
                  const LogicOptions& opt = {});
LogicValue read_logic(const UnitState& unit, int radix, const LevelCodec& codec, const ModelParams& params,
                      const LogicOptions& opt = {});

/// The unit stores p; q is applied as positive-only programming toward its level.
LogicValue mvl_max(UnitState& unit, const LogicValue& p, const LogicValue& q, const LevelCodec& codec,
                   const ModelParams& params, const LogicOptions& opt = {});
/// The unit stores p; q is applied as negative-only programming toward its level.
LogicValue mvl_min(UnitState& unit, const LogicValue& p, const LogicValue& q, const LevelCodec& codec,
                   const ModelParams& params, const LogicOptions& opt = {});
/// The unit stores x; writes radix-1 when x == k, else 0, and returns the written value.
LogicValue mvl_threshold(UnitState& unit, const LogicValue& x, const LogicValue& k, const LevelCodec& codec,
                         const ModelParams& params, const LogicOptions& opt = {});

// ---------------------------------------------------------------------------
// Cascades

/// Expression tree. Call syntax MAX(a,b), MIN(a,b), THR<k>(a), XOR(a,b), NOT(a), or the
/// equivalent s-expressions (max a b); integer constants and identifiers for variables.
struct CascadeExpr {
    enum class Op { constant, variable, max, min, threshold, xor_, not_ };
    Op op = Op::constant;
    int value = 0;           ///< constant value or threshold k
    std::string name;        ///< variable name
    std::vector<std::shared_ptr<const CascadeExpr>> args;

    std::string to_string() const;
    /// Number of gate evaluations, i.e. units drawn from the pool.
    int gate_count() const;
    int depth() const;
};

using ExprPtr = std::shared_ptr<const CascadeExpr>;

ExprPtr parse_cascade(const std::string& text);
ExprPtr make_const(int value);
ExprPtr make_var(const std::string& name);
ExprPtr make_op(CascadeExpr::Op op, std::vector<ExprPtr> args, int k = 0);

/// Units available to a cascade; exhausted pools raise pool_exhausted.
class UnitPool {
public:
    explicit UnitPool(std::vector<UnitState> units) : units_(std::move(units)) {}
    static UnitPool pristine(std::size_t n) { return UnitPool(std::vector<UnitState>(n)); }
    UnitState& acquire();
    std::size_t used() const { return next_; }
    std::size_t size() const { return units_.size(); }

private:
    std::vector<UnitState> units_;
    std::size_t next_ = 0;
};

/// Arithmetic reference evaluation.
int cascade_reference(const CascadeExpr& expr, int radix, const std::map<std::string, int>& vars = {});

/// Evaluates every gate node on its own pool unit.
int cascade_eval(const CascadeExpr& expr, int radix, UnitPool& pool, const LevelCodec& codec,
                 const ModelParams& params, const std::map<std::string, int>& vars = {},
                 const LogicOptions& opt = {});

// ---------------------------------------------------------------------------

struct TruthRow {
    int p = 0;
    int q = 0;
    double G_final = 0.0;
    int output = 0;
};

/// Enumerates all radix^2 input pairs on fresh units. Gate names: XOR, AND, OR, NOT, NAND,
/// NOR, IMP (radix 2), MAX, MIN, THRESHOLD (radix 3 or 4; q is k).
std::vector<TruthRow> truth_table(const std::string& gate, int radix, const LevelCodec& codec,
                                  const ModelParams& params, const LogicOptions& opt = {});
std::string truth_table_csv(const std::vector<TruthRow>& rows);

}  // namespace mhdd
