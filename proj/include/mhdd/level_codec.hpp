#pragma once

#include "mhdd/device_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mhdd {

/// Map between 6-bit values, programming stop voltages and target read conductances.
/// Stored levels are read as G_level = -G(V_read): a programmed unit holds a build-in
/// potential above V_read, so its small-signal conductance at the probe is negative.
struct LevelCodec {
    int n_states = 96;
    int n_used = 64;
    double V_base = 0.5;
    double V_step = 0.1;
    double G_lo = 0.4e-9;
    double G_hi = 7.3e-9;
    double verify_tol = 0.02;     ///< relative verify tolerance (clipped to a quarter of the level gap)
    int max_iters = 8;
    double V_read = 0.1;
    int read_samples = 256;       ///< current samples averaged by one read pulse
    int program_points = 41;      ///< samples per leg of a programming sweep
    double dwell = 0.02;          ///< dwell per programming sample, s
    double V_max = 10.0;          ///< largest programming amplitude, V

    void validate() const;
    bool operator==(const LevelCodec&) const = default;
};

double level_to_voltage(const LevelCodec& codec, int value);
double level_to_conductance(const LevelCodec& codec, int value);
/// Absolute verify window around level `value`, S.
double verify_window(const LevelCodec& codec, int value);
/// Targets and nominal voltages of the full n_states staircase.
double staircase_target(const LevelCodec& codec, int state);
double staircase_voltage(const LevelCodec& codec, int state);

std::string codec_to_text(const LevelCodec& codec);
LevelCodec codec_from_text(const std::string& text);
void save_codec(const LevelCodec& codec, const std::string& path);
LevelCodec load_codec(const std::string& path);

struct LevelReading {
    int level = 0;
    double G_measured = 0.0;  ///< G_level = -G(V_read), S
    double residual = 0.0;    ///< relative distance to the nearest target
};

/// Stored-level conductance of a unit, noiseless.
double level_conductance(const UnitState& unit, const ModelParams& params, const LevelCodec& codec);

/// Nearest level by relative distance; ties go to the lower level.
LevelReading decode_level(const LevelCodec& codec, double G_level);

LevelReading read_level(const UnitState& unit, const LevelCodec& codec, const ModelParams& params,
                        std::optional<std::uint64_t> noise_seed = std::nullopt);

/// Programming sweep 0 -> polarity*V -> 0 with `program_points` samples per leg.
Waveform programming_sweep(const LevelCodec& codec, int polarity, double V);

struct ProgramAttempt {
    int polarity = 0;        ///< +1 positive branch, -1 negative branch ("back scan")
    double stop_V = 0.0;     ///< magnitude of the applied stop voltage
    double G_after = 0.0;    ///< verify read after the attempt
};

struct ProgramReport {
    UnitState state;
    int start_level = 0;
    double start_G = 0.0;
    int target_level = 0;
    double nominal_V = 0.0;  ///< level_to_voltage(target)
    std::vector<ProgramAttempt> attempts;
    double final_G = 0.0;
    std::vector<Waveform> waveforms;  ///< every waveform applied, in order
};

struct ProgramOptions {
    std::optional<std::uint64_t> noise_seed;  ///< enables noisy verify reads
    int allowed_polarity = 0;                 ///< 0 either, +1 positive only, -1 negative only
    bool keep_waveforms = false;
    double initial_guess_V = 1.0;             ///< first stop voltage tried by the planner
};

/// Closed-loop program-and-verify. Throws program_failure when the loop gives up.
ProgramReport program_level(const UnitState& unit, int value, const LevelCodec& codec, const ModelParams& params,
                            const ProgramOptions& opt = {});

/// Programs the unit to an arbitrary G_level target (used by the staircase).
ProgramReport program_conductance(const UnitState& unit, double G_target, double tolerance, const LevelCodec& codec,
                                  const ModelParams& params, const ProgramOptions& opt = {});

struct StaircaseMetrics {
    double r2 = 0.0;
    double uniformity_pct = 0.0;
};

/// r2 of the least-squares line G(level); uniformity = (1 - sigma/mu) * 100 over the G column.
StaircaseMetrics staircase_metrics(const std::vector<std::pair<double, double>>& readings);
double linear_fit_r2(const std::vector<std::pair<double, double>>& points);
/// (1 - s/mean) * 100 with the n-1 sample deviation.
double uniformity_pct(const std::vector<double>& values);
/// Uniformity from the RMS of per-group relative deviations (e.g. one group per sweep sample).
double pooled_uniformity_pct(const std::vector<std::vector<double>>& groups);

struct StaircaseRow {
    int level = 0;
    double voltage_V = 0.0;
    double G_target = 0.0;
    double G_measured = 0.0;
};
std::string staircase_csv(const std::vector<StaircaseRow>& rows);

/// Programs the unit up through every staircase state in order and records the verify reads.
std::vector<StaircaseRow> run_staircase(const UnitState& unit, const LevelCodec& codec, const ModelParams& params,
                                        std::optional<std::uint64_t> noise_seed = std::nullopt);

// ---------------------------------------------------------------------------
// Uniformity and retention studies over sweep-programmed states

/// Stop voltages 1, 2, ..., 10 V.
std::vector<double> study_stop_voltages();

/// G(V_read) after a 0 -> stop -> 0 sweep (0.1 V steps, 20 ms dwell) applied to `unit`.
double swept_state_conductance(const UnitState& unit, double stop_V, const ModelParams& params, double V_read = 0.1);

/// Pooled uniformity of `sweeps` repeated single-sample noisy reads of every state on one device.
double cycle_uniformity(const ModelParams& params, const std::vector<double>& stops, int sweeps, std::uint64_t seed);
/// Pooled uniformity of every state across `devices` units spawned from derive_seed(seed, i), noiseless reads.
double device_uniformity(const ModelParams& params, const std::vector<double>& stops, int devices, std::uint64_t seed);

struct RetentionReport {
    std::vector<double> stops;
    std::vector<std::vector<double>> traces;  ///< G(V_read) per state, first entry at t = 0
    double max_fluctuation = 0.0;             ///< max |G(t) - G(0)| / |G(0)| over all states
    bool distinguishable = false;             ///< the [min, max] ranges of all traces are pairwise disjoint
};

RetentionReport retention_study(const ModelParams& params, const std::vector<double>& stops, double duration_s,
                                double sample_every_s, std::uint64_t seed);

}  // namespace mhdd
