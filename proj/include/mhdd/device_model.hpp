#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mhdd {

/// Oxidation fraction of an untouched unit (Ru3+ share of the total metal).
inline constexpr double x_pristine = 0.511;

/// Number of molecules under the probe, used for per-molecule power.
inline constexpr double molecules_per_unit = 235.0;

/// Calibrated constants of the two-variable compact model. SI units throughout.
struct ModelParams {
    double G_red = 0.0;         ///< molecular conductance of the fully reduced reference state, S
    double alpha_ox = 0.0;      ///< fractional molecular conductance loss per unit oxidation
    double V_decay = 0.0;       ///< current-saturation voltage scale, V
    double G_leak = 0.0;        ///< ohmic leak conductance at x = x_pristine, S
    double leak_gamma = 0.0;    ///< logarithmic leak growth per unit oxidation
    double kappa = 0.0;         ///< build-in potential per unit displacement, V
    double c_sat = 0.0;         ///< saturation displacement
    double V_c = 0.0;           ///< ion-drift voltage scale, V
    double tau_c = 0.0;         ///< ion-drift time constant at 1 V drive, s
    double V_act_ion = 0.0;     ///< field-activation scale of ion drift, V
    double release_gain = 0.0;  ///< drift speed-up while the field opposes the stored displacement
    double k_ox = 0.0;          ///< oxidation rate, 1/(V s)
    double k_red = 0.0;         ///< reduction rate, 1/(V s)
    double V_act_redox = 0.0;   ///< field-activation scale of the redox rates, V
    double x_on = 0.0;          ///< oxidation fraction approached under sustained positive bias
    double sigma_c2c = 0.0;     ///< cycle-to-cycle multiplicative read-noise sigma
    double sigma_d2d = 0.0;     ///< device-to-device lognormal sigma of the conductance scale
    double drift_sigma = 0.0;   ///< stationary spread of retention drift in (x, c)
    double drift_tau = 0.0;     ///< retention drift correlation time, s
    double eps_read = 0.0;      ///< probe voltage standing in for a "0 V" read, V

    /// Calibrated Ru-SAM parameter set shipped with the library.
    static ModelParams calibrated();

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;

    /// Names accepted by get/set and by the key=value format, in file order.
    static const std::vector<std::string>& names();
    double get(const std::string& name) const;
    void set(const std::string& name, double value);

    bool operator==(const ModelParams&) const = default;
};

std::string params_to_text(const ModelParams& p);
/// Missing keys keep the values of `base`; unknown keys are rejected.
ModelParams params_from_text(const std::string& text, const ModelParams& base = ModelParams::calibrated());
void save_params(const ModelParams& p, const std::string& path);
ModelParams load_params(const std::string& path);

struct UnitState {
    double x = x_pristine;      ///< oxidation fraction in [0, 1]
    double c = 0.0;             ///< normalized anion displacement in [-c_sat, c_sat]
    double device_factor = 1.0; ///< device-to-device conductance scale, > 0
    double elapsed_s = 0.0;

    bool operator==(const UnitState&) const = default;
};

/// Ramp toward `target_V` in steps of `step_V`, dwelling `dwell_s` at every sample.
struct Segment {
    double target_V = 0.0;
    double step_V = 0.05;
    double dwell_s = 0.02;
};

struct WaveSample {
    double V = 0.0;
    double dwell_s = 0.0;
    bool forward = true;   ///< |V| moving away from zero within the segment
    int polarity = 1;      ///< sign used when the sample is read at |V| < eps_read
};

struct Waveform {
    double start_V = 0.0;
    std::vector<Segment> segments;
    std::string label;

    /// Each segment is sampled inclusively: round(|dV|/step) + 1 points.
    std::vector<WaveSample> expand() const;
    void validate() const;
    double peak_abs_V() const;
    /// +1 if the waveform only reaches non-negative voltages, -1 if only non-positive, 0 if both.
    int polarity() const;
};

Waveform make_sweep(double start, double stop, double step, double dwell, bool return_to_start);
/// Constant bias V held for `duration_s` (one sample).
Waveform make_hold(double V, double duration_s);
/// 0 -> +A -> 0 -> -A -> 0, the dual-direction scan.
Waveform make_dual_sweep(double amplitude, double step, double dwell);

struct IVSample {
    double t_s = 0.0;
    double V = 0.0;
    double I = 0.0;
    double G = 0.0;
    bool forward = true;
};

struct IVTrace {
    std::vector<IVSample> samples;

    std::size_t size() const { return samples.size(); }
    void write_csv(std::ostream& os) const;
    std::string to_csv() const;
};

double builtin_potential(const UnitState& s, const ModelParams& p);
double instantaneous_current(const UnitState& s, double V, const ModelParams& p);
/// Molecular and leak conductances for the present oxidation state, S.
double molecular_conductance(const UnitState& s, const ModelParams& p);
double leak_conductance(const UnitState& s, const ModelParams& p);

/// Advances (x, c) under constant bias V for dt seconds. The update is the exact
/// solution of the rate equations for piecewise-constant bias.
UnitState step_dynamics(const UnitState& s, double V, double dt, const ModelParams& p);

struct WaveformResult {
    UnitState state;
    IVTrace trace;
};

WaveformResult apply_waveform(const UnitState& s, const Waveform& wf, const ModelParams& p,
                              std::optional<std::uint64_t> noise_seed = std::nullopt);
/// Final state of apply_waveform without recording a trace.
UnitState evolve(const UnitState& s, const Waveform& wf, const ModelParams& p);

/// I(V_read)/V_read. |V_read| below eps_read is probed at eps_read with the sign of V_read
/// (V_read == 0 reads at +eps_read).
double read_conductance(const UnitState& s, const ModelParams& p, double V_read = 0.1);
double read_conductance_noisy(const UnitState& s, const ModelParams& p, double V_read, std::uint64_t seed,
                              int samples = 1);

/// G_forward(V_read) - G_backward(V_read), linearly interpolated on branches of matching sign.
double memory_window(const IVTrace& trace, double V_read);
/// Voltage of the first backward sample whose conductance turned negative; nullopt if none.
std::optional<double> back_branch_crossing(const IVTrace& trace, int polarity = 1);

struct PowerReport {
    double peak_W = 0.0;
    double per_molecule_W = 0.0;
};
PowerReport peak_power(const IVTrace& trace);

UnitState spawn_unit(const ModelParams& p, std::uint64_t device_seed);

/// Ornstein-Uhlenbeck drift of (x, c) around the state at call time.
UnitState retention_evolve(const UnitState& s, double duration_s, const ModelParams& p, std::uint64_t seed);

/// Conductance trajectory sampled every `sample_every_s` during retention (first entry at t = 0).
std::vector<double> retention_trace(const UnitState& s, double duration_s, double sample_every_s,
                                    const ModelParams& p, std::uint64_t seed, double V_read = 0.1);

}  // namespace mhdd
