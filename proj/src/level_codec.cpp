#include "mhdd/level_codec.hpp"

#include "mhdd/errors.hpp"
#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mhdd {

void LevelCodec::validate() const {
    if (n_used < 2 || n_used > n_states) throw std::invalid_argument("codec: need 2 <= n_used <= n_states");
    if (!(V_base > 0.0) || !(V_step > 0.0)) throw std::invalid_argument("codec: V_base and V_step must be positive");
    if (V_base + V_step * (n_states - 1) > 10.0 + 1e-9)
        throw std::invalid_argument("codec: ladder exceeds 10 V");
    if (!(G_lo > 0.0) || !(G_hi > G_lo)) throw std::invalid_argument("codec: need 0 < G_lo < G_hi");
    if (!(verify_tol > 0.0) || !(verify_tol < 1.0)) throw std::invalid_argument("codec: verify_tol must be in (0, 1)");
    if (max_iters < 1) throw std::invalid_argument("codec: max_iters must be >= 1");
    if (!(V_read > 0.0)) throw std::invalid_argument("codec: V_read must be positive");
    if (read_samples < 1) throw std::invalid_argument("codec: read_samples must be >= 1");
    if (program_points < 2) throw std::invalid_argument("codec: program_points must be >= 2");
    if (!(dwell > 0.0)) throw std::invalid_argument("codec: dwell must be positive");
    if (!(V_max > 0.0) || !std::isfinite(V_max)) throw std::invalid_argument("codec: V_max must be positive");
}

namespace {

void check_value(const LevelCodec& codec, int value) {
    if (value < 0 || value >= codec.n_used)
        throw std::out_of_range("level " + std::to_string(value) + " outside 0.." + std::to_string(codec.n_used - 1));
}

double level_gap(const LevelCodec& codec) { return (codec.G_hi - codec.G_lo) / (codec.n_used - 1); }

}  // namespace

double level_to_voltage(const LevelCodec& codec, int value) {
    check_value(codec, value);
    return codec.V_base + codec.V_step * value;
}

double level_to_conductance(const LevelCodec& codec, int value) {
    check_value(codec, value);
    return codec.G_lo + value * level_gap(codec);
}

double verify_window(const LevelCodec& codec, int value) {
    return std::min(codec.verify_tol * level_to_conductance(codec, value), 0.25 * level_gap(codec));
}

double staircase_target(const LevelCodec& codec, int state) {
    if (state < 0 || state >= codec.n_states) throw std::out_of_range("staircase state out of range");
    return codec.G_lo + state * (codec.G_hi - codec.G_lo) / (codec.n_states - 1);
}

double staircase_voltage(const LevelCodec& codec, int state) {
    if (state < 0 || state >= codec.n_states) throw std::out_of_range("staircase state out of range");
    return codec.V_base + codec.V_step * state;
}

// ---------------------------------------------------------------------------

namespace {

struct codec_field {
    const char* name;
    double LevelCodec::*d;
    int LevelCodec::*i;
};

const codec_field codec_fields[] = {
    {"n_states", nullptr, &LevelCodec::n_states},
    {"n_used", nullptr, &LevelCodec::n_used},
    {"V_base", &LevelCodec::V_base, nullptr},
    {"V_step", &LevelCodec::V_step, nullptr},
    {"G_lo", &LevelCodec::G_lo, nullptr},
    {"G_hi", &LevelCodec::G_hi, nullptr},
    {"verify_tol", &LevelCodec::verify_tol, nullptr},
    {"max_iters", nullptr, &LevelCodec::max_iters},
    {"V_read", &LevelCodec::V_read, nullptr},
    {"read_samples", nullptr, &LevelCodec::read_samples},
    {"program_points", nullptr, &LevelCodec::program_points},
    {"dwell", &LevelCodec::dwell, nullptr},
    {"V_max", &LevelCodec::V_max, nullptr},
};

}  // namespace

std::string codec_to_text(const LevelCodec& codec) {
    std::ostringstream os;
    for (const auto& f : codec_fields) {
        os << f.name << '=';
        if (f.d)
            os << format_double(codec.*(f.d));
        else
            os << codec.*(f.i);
        os << '\n';
    }
    return os.str();
}

LevelCodec codec_from_text(const std::string& text) {
    LevelCodec codec;
    for (const auto& [key, value] : parse_key_values(text)) {
        const auto it = std::find_if(std::begin(codec_fields), std::end(codec_fields),
                                     [&](const codec_field& f) { return key == f.name; });
        if (it == std::end(codec_fields)) throw std::invalid_argument("unknown codec key '" + key + "'");
        const double v = parse_double(value);
        if (it->d) {
            codec.*(it->d) = v;
        } else {
            if (v != std::floor(v) || std::abs(v) > 1e9) throw std::invalid_argument("codec key '" + key + "' must be an integer");
            codec.*(it->i) = static_cast<int>(v);
        }
    }
    codec.validate();
    return codec;
}

void save_codec(const LevelCodec& codec, const std::string& path) { write_file_atomic(path, codec_to_text(codec)); }

LevelCodec load_codec(const std::string& path) { return codec_from_text(read_file(path)); }

// ---------------------------------------------------------------------------

double level_conductance(const UnitState& unit, const ModelParams& params, const LevelCodec& codec) {
    return -read_conductance(unit, params, codec.V_read);
}

LevelReading decode_level(const LevelCodec& codec, double G_level) {
    // A non-positive reading is equidistant from every level, so it ties down to level 0.
    const double G = std::max(G_level, 0.0);
    int best = 0;
    double best_d = std::abs(G - codec.G_lo) / codec.G_lo;
    for (int k = 1; k < codec.n_used; ++k) {
        const double Gk = level_to_conductance(codec, k);
        const double d = std::abs(G - Gk) / Gk;
        if (d < best_d * (1.0 - 1e-12)) {
            best = k;
            best_d = d;
        }
    }
    return {best, G_level, best_d};
}

LevelReading read_level(const UnitState& unit, const LevelCodec& codec, const ModelParams& params,
                        std::optional<std::uint64_t> noise_seed) {
    const double G = noise_seed ? -read_conductance_noisy(unit, params, codec.V_read, *noise_seed, codec.read_samples)
                                : level_conductance(unit, params, codec);
    return decode_level(codec, G);
}

Waveform programming_sweep(const LevelCodec& codec, int polarity, double V) {
    if (polarity != 1 && polarity != -1) throw std::invalid_argument("programming polarity must be +1 or -1");
    if (!(V > 0.0) || !std::isfinite(V)) throw std::invalid_argument("programming amplitude must be positive");
    auto wf = make_sweep(0.0, polarity * V, V / (codec.program_points - 1), codec.dwell, true);
    wf.label = polarity > 0 ? "program+" : "program-";
    return wf;
}

// ---------------------------------------------------------------------------

namespace {

/// Stop voltage whose sweep lands the (noise-free) state on G_target within plan_tol.
double plan_stop_voltage(const UnitState& s, int polarity, double G_target, double plan_tol, double hint,
                         const LevelCodec& codec, const ModelParams& p) {
    auto f = [&](double V) {
        return level_conductance(evolve(s, programming_sweep(codec, polarity, V), p), p, codec) - G_target;
    };
    const double f0 = level_conductance(s, p, codec) - G_target;
    double a = 0.0, fa = f0;
    double b = std::clamp(hint, 1e-3, codec.V_max), fb = f(b);
    while (fb * f0 > 0.0) {
        if (b >= codec.V_max) return -1.0;
        a = b;
        fa = fb;
        b = std::min(b * 1.6, codec.V_max);
        fb = f(b);
    }
    if (std::abs(fb) <= plan_tol) return b;
    int side = 0;
    for (int it = 0; it < 100; ++it) {
        const double c = (fa * b - fb * a) / (fa - fb);
        const double fc = f(c);
        if (std::abs(fc) <= plan_tol || std::abs(b - a) < 1e-12) return c;
        if (fc * fb > 0.0) {
            b = c;
            fb = fc;
            if (side == -1) fa *= 0.5;
            side = -1;
        } else {
            a = c;
            fa = fc;
            if (side == 1) fb *= 0.5;
            side = 1;
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

ProgramReport program_conductance(const UnitState& unit, double G_target, double tolerance, const LevelCodec& codec,
                                  const ModelParams& params, const ProgramOptions& opt) {
    if (!(tolerance > 0.0)) throw std::invalid_argument("program tolerance must be positive");
    ProgramReport rep;
    rep.state = unit;
    std::uint64_t reads = 0;
    auto measure = [&](const UnitState& s) {
        if (opt.noise_seed)
            return -read_conductance_noisy(s, params, codec.V_read, derive_seed(*opt.noise_seed, reads++),
                                           codec.read_samples);
        return level_conductance(s, params, codec);
    };
    double G = measure(rep.state);
    rep.start_G = G;
    rep.start_level = decode_level(codec, G).level;
    const double plan_tol = 0.25 * tolerance;
    double hint = opt.initial_guess_V;

    for (int attempt = 0; attempt < codec.max_iters && std::abs(G - G_target) > tolerance; ++attempt) {
        const double G_model = level_conductance(rep.state, params, codec);
        if (std::abs(G_model - G_target) <= plan_tol) {
            G = measure(rep.state);  // the miss was read noise; verify again
            continue;
        }
        const int polarity = G_model < G_target ? 1 : -1;
        if (opt.allowed_polarity != 0 && polarity != opt.allowed_polarity)
            throw program_failure("target requires the disallowed programming polarity", -1, G,
                                  decode_level(codec, G).level);
        const double V = plan_stop_voltage(rep.state, polarity, G_target, plan_tol, hint, codec, params);
        if (V <= 0.0)
            throw program_failure("target conductance unreachable within V_max", -1, G, decode_level(codec, G).level);
        const auto wf = programming_sweep(codec, polarity, V);
        rep.state = evolve(rep.state, wf, params);
        if (opt.keep_waveforms) rep.waveforms.push_back(wf);
        G = measure(rep.state);
        rep.attempts.push_back({polarity, V, G});
        hint = V;
    }
    if (std::abs(G - G_target) > tolerance)
        throw program_failure("program-and-verify did not converge", -1, G, decode_level(codec, G).level);
    rep.final_G = G;
    return rep;
}

ProgramReport program_level(const UnitState& unit, int value, const LevelCodec& codec, const ModelParams& params,
                            const ProgramOptions& opt) {
    const double G_target = level_to_conductance(codec, value);
    const double nominal = level_to_voltage(codec, value);
    const auto start = read_level(unit, codec, params,
                                  opt.noise_seed ? std::optional<std::uint64_t>(derive_seed(*opt.noise_seed, ~0ULL))
                                                 : std::nullopt);
    if (start.level == value && std::abs(start.G_measured - G_target) <= 0.5 * level_gap(codec)) {
        ProgramReport rep;
        rep.state = unit;
        rep.start_level = rep.target_level = value;
        rep.start_G = rep.final_G = start.G_measured;
        rep.nominal_V = nominal;
        return rep;
    }
    try {
        ProgramOptions o = opt;
        if (G_target > start.G_measured) o.initial_guess_V = nominal;
        auto rep = program_conductance(unit, G_target, verify_window(codec, value), codec, params, o);
        rep.target_level = value;
        rep.nominal_V = nominal;
        return rep;
    } catch (const program_failure& e) {
        throw program_failure(std::string(e.what()) + " (level " + std::to_string(value) + ")", value, e.last_G(),
                              e.last_level());
    }
}

// ---------------------------------------------------------------------------

double linear_fit_r2(const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 3) throw std::invalid_argument("linear fit needs at least 3 points");
    const double n = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pts) {
        mx += x / n;
        my += y / n;
    }
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (syy == 0.0) return 1.0;
    if (sxx == 0.0) return 0.0;
    return sxy * sxy / (sxx * syy);
}

double uniformity_pct(const std::vector<double>& values) {
    if (values.size() < 2) throw std::invalid_argument("uniformity needs at least 2 values");
    const double n = static_cast<double>(values.size());
    double mu = 0.0;
    for (double v : values) mu += v / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mu) * (v - mu);
    return (1.0 - std::sqrt(ss / (n - 1.0)) / std::abs(mu)) * 100.0;
}

double pooled_uniformity_pct(const std::vector<std::vector<double>>& groups) {
    double acc = 0.0;
    std::size_t used = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw std::invalid_argument("each uniformity group needs at least 2 values");
        const double u = 1.0 - uniformity_pct(g) / 100.0;
        acc += u * u;
        ++used;
    }
    if (used == 0) throw std::invalid_argument("pooled uniformity needs at least one group");
    return (1.0 - std::sqrt(acc / static_cast<double>(used))) * 100.0;
}

StaircaseMetrics staircase_metrics(const std::vector<std::pair<double, double>>& readings) {
    if (readings.size() < 3) throw std::invalid_argument("staircase metrics need at least 3 points");
    std::vector<double> G;
    for (const auto& r : readings) G.push_back(r.second);
    return {linear_fit_r2(readings), uniformity_pct(G)};
}

std::vector<StaircaseRow> run_staircase(const UnitState& unit, const LevelCodec& codec, const ModelParams& params,
                                        std::optional<std::uint64_t> noise_seed) {
    std::vector<StaircaseRow> rows;
    UnitState s = unit;
    const double gap = (codec.G_hi - codec.G_lo) / (codec.n_states - 1);
    for (int k = 0; k < codec.n_states; ++k) {
        const double G_t = staircase_target(codec, k);
        ProgramOptions opt;
        if (noise_seed) opt.noise_seed = derive_seed(*noise_seed, static_cast<std::uint64_t>(k));
        auto rep = program_conductance(s, G_t, std::min(codec.verify_tol * G_t, 0.25 * gap), codec, params, opt);
        s = rep.state;
        rows.push_back({k, staircase_voltage(codec, k), G_t, rep.final_G});
    }
    return rows;
}

std::string staircase_csv(const std::vector<StaircaseRow>& rows) {
    std::ostringstream os;
    os << "level,voltage_V,G_target_S,G_measured_S\n";
    for (const auto& r : rows)
        os << r.level << ',' << format_double(r.voltage_V, 12) << ',' << format_double(r.G_target, 12) << ','
           << format_double(r.G_measured, 12) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------

std::vector<double> study_stop_voltages() {
    std::vector<double> v;
    for (int s = 1; s <= 10; ++s) v.push_back(static_cast<double>(s));
    return v;
}

double swept_state_conductance(const UnitState& unit, double stop_V, const ModelParams& params, double V_read) {
    return read_conductance(evolve(unit, make_sweep(0.0, stop_V, 0.1, 0.02, true), params), params, V_read);
}

double cycle_uniformity(const ModelParams& params, const std::vector<double>& stops, int sweeps, std::uint64_t seed) {
    if (sweeps < 2) throw std::invalid_argument("cycle uniformity needs at least 2 sweeps");
    std::vector<std::vector<double>> groups;
    for (std::size_t k = 0; k < stops.size(); ++k) {
        const auto state = evolve(UnitState{}, make_sweep(0.0, stops[k], 0.1, 0.02, true), params);
        std::vector<double> g;
        for (int r = 0; r < sweeps; ++r)
            g.push_back(read_conductance_noisy(state, params, 0.1, derive_seed(seed, k * 1000 + r)));
        groups.push_back(std::move(g));
    }
    return pooled_uniformity_pct(groups);
}

double device_uniformity(const ModelParams& params, const std::vector<double>& stops, int devices, std::uint64_t seed) {
    if (devices < 2) throw std::invalid_argument("device uniformity needs at least 2 devices");
    std::vector<UnitState> units;
    for (int d = 0; d < devices; ++d) units.push_back(spawn_unit(params, derive_seed(seed, d)));
    std::vector<std::vector<double>> groups;
    for (double stop : stops) {
        std::vector<double> g;
        for (const auto& u : units) g.push_back(swept_state_conductance(u, stop, params));
        groups.push_back(std::move(g));
    }
    return pooled_uniformity_pct(groups);
}

RetentionReport retention_study(const ModelParams& params, const std::vector<double>& stops, double duration_s,
                                double sample_every_s, std::uint64_t seed) {
    RetentionReport rep;
    rep.stops = stops;
    std::vector<std::pair<double, double>> ranges;
    for (std::size_t k = 0; k < stops.size(); ++k) {
        const auto state = evolve(UnitState{}, make_sweep(0.0, stops[k], 0.1, 0.02, true), params);
        auto G = retention_trace(state, duration_s, sample_every_s, params, derive_seed(seed, k));
        const auto [lo, hi] = std::minmax_element(G.begin(), G.end());
        ranges.emplace_back(*lo, *hi);
        for (double g : G) rep.max_fluctuation = std::max(rep.max_fluctuation, std::abs(g - G.front()) / std::abs(G.front()));
        rep.traces.push_back(std::move(G));
    }
    std::sort(ranges.begin(), ranges.end());
    rep.distinguishable = true;
    for (std::size_t k = 1; k < ranges.size(); ++k)
        if (ranges[k].first <= ranges[k - 1].second) rep.distinguishable = false;
    return rep;
}

}  // namespace mhdd
