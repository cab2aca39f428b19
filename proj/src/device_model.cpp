#include "mhdd/device_model.hpp"

#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mhdd {

namespace {

struct field {
    const char* name;
    double ModelParams::*member;
};

const field fields[] = {
    {"G_red", &ModelParams::G_red},
    {"alpha_ox", &ModelParams::alpha_ox},
    {"V_decay", &ModelParams::V_decay},
    {"G_leak", &ModelParams::G_leak},
    {"leak_gamma", &ModelParams::leak_gamma},
    {"kappa", &ModelParams::kappa},
    {"c_sat", &ModelParams::c_sat},
    {"V_c", &ModelParams::V_c},
    {"tau_c", &ModelParams::tau_c},
    {"V_act_ion", &ModelParams::V_act_ion},
    {"release_gain", &ModelParams::release_gain},
    {"k_ox", &ModelParams::k_ox},
    {"k_red", &ModelParams::k_red},
    {"V_act_redox", &ModelParams::V_act_redox},
    {"x_on", &ModelParams::x_on},
    {"sigma_c2c", &ModelParams::sigma_c2c},
    {"sigma_d2d", &ModelParams::sigma_d2d},
    {"drift_sigma", &ModelParams::drift_sigma},
    {"drift_tau", &ModelParams::drift_tau},
    {"eps_read", &ModelParams::eps_read},
};

const field& find_field(const std::string& name) {
    for (const auto& f : fields)
        if (name == f.name) return f;
    throw std::invalid_argument("unknown model parameter '" + name + "'");
}

/// sinh(|V|/Va) / sinh(1/Va), evaluated without overflow for small Va.
double activation(double V, double Va) {
    const double a = std::abs(V) / Va;
    const double b = 1.0 / Va;
    if (a == 0.0) return 0.0;
    if (b > 20.0 || a > 20.0) {
        const double num = -std::expm1(-2.0 * a);
        const double den = -std::expm1(-2.0 * b);
        return std::exp(a - b) * num / den;
    }
    return std::sinh(a) / std::sinh(b);
}

int sign_of(double v) { return (v > 0) - (v < 0); }

double probe_voltage(double V, int polarity, double eps) {
    if (std::abs(V) >= eps) return V;
    if (V != 0.0) return eps * sign_of(V);
    return eps * (polarity < 0 ? -1.0 : 1.0);
}

}  // namespace

ModelParams ModelParams::calibrated() {
    ModelParams p;
    p.G_red = 4.0235005893474e-08;
    p.alpha_ox = 0.7749523584;
    p.V_decay = 0.005;
    p.G_leak = 2.8594384144388e-11;
    p.leak_gamma = 31.15959225;
    p.kappa = 3.500025191;
    p.c_sat = 0.999991801;
    p.V_c = 0.7010454413;
    p.tau_c = 84.08762224;
    p.V_act_ion = 0.3176873894;
    p.release_gain = 41.98983136;
    p.k_ox = 0.02323056511;
    p.k_red = 11.55000007;
    p.V_act_redox = 1.972547085;
    p.x_on = 0.6;
    p.sigma_c2c = 0.0141;
    p.sigma_d2d = 0.0305;
    p.drift_sigma = 0.001;
    p.drift_tau = 1000.0;
    p.eps_read = 0.005;
    return p;
}

void ModelParams::validate() const {
    auto positive = [](double v, const char* n) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(n) + " must be positive and finite");
    };
    auto nonneg = [](double v, const char* n) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(n) + " must be non-negative and finite");
    };
    positive(G_red, "G_red");
    positive(V_decay, "V_decay");
    positive(G_leak, "G_leak");
    nonneg(leak_gamma, "leak_gamma");
    positive(kappa, "kappa");
    positive(c_sat, "c_sat");
    positive(V_c, "V_c");
    positive(tau_c, "tau_c");
    positive(V_act_ion, "V_act_ion");
    positive(release_gain, "release_gain");
    positive(k_ox, "k_ox");
    positive(k_red, "k_red");
    positive(V_act_redox, "V_act_redox");
    positive(drift_tau, "drift_tau");
    positive(eps_read, "eps_read");
    nonneg(sigma_c2c, "sigma_c2c");
    nonneg(sigma_d2d, "sigma_d2d");
    nonneg(drift_sigma, "drift_sigma");
    if (c_sat > 1.0) throw std::invalid_argument("c_sat must not exceed 1");
    if (!(alpha_ox >= 0.0 && alpha_ox < 1.0)) throw std::invalid_argument("alpha_ox must lie in [0, 1)");
    if (!(x_on > 0.0 && x_on <= 1.0)) throw std::invalid_argument("x_on must lie in (0, 1]");
}

const std::vector<std::string>& ModelParams::names() {
    static const std::vector<std::string> n = [] {
        std::vector<std::string> v;
        for (const auto& f : fields) v.emplace_back(f.name);
        return v;
    }();
    return n;
}

double ModelParams::get(const std::string& name) const { return this->*(find_field(name).member); }

void ModelParams::set(const std::string& name, double value) { this->*(find_field(name).member) = value; }

std::string params_to_text(const ModelParams& p) {
    std::ostringstream os;
    os << "# mhdd model parameters (SI units)\n";
    for (const auto& f : fields) os << f.name << '=' << format_double(p.*(f.member)) << '\n';
    return os.str();
}

ModelParams params_from_text(const std::string& text, const ModelParams& base) {
    ModelParams p = base;
    for (const auto& [k, v] : parse_key_values(text)) p.set(k, parse_double(v));
    p.validate();
    return p;
}

void save_params(const ModelParams& p, const std::string& path) { write_file_atomic(path, params_to_text(p)); }

ModelParams load_params(const std::string& path) { return params_from_text(read_file(path)); }

// ---------------------------------------------------------------------------
// Waveforms

void Waveform::validate() const {
    if (!std::isfinite(start_V)) throw std::invalid_argument("waveform start voltage is not finite");
    for (const auto& s : segments) {
        if (!std::isfinite(s.target_V) || !std::isfinite(s.step_V) || !std::isfinite(s.dwell_s))
            throw std::invalid_argument("waveform segment has non-finite values");
        if (!(s.step_V > 0.0)) throw std::invalid_argument("waveform ramp step must be positive");
        if (!(s.dwell_s > 0.0)) throw std::invalid_argument("waveform dwell must be positive");
    }
}

std::vector<WaveSample> Waveform::expand() const {
    validate();
    std::vector<WaveSample> out;
    double from = start_V;
    bool forward = true;
    for (const auto& s : segments) {
        const double delta = s.target_V - from;
        const long n = std::lround(std::abs(delta) / s.step_V) + 1;
        if (std::abs(s.target_V) > std::abs(from)) forward = true;
        else if (std::abs(s.target_V) < std::abs(from)) forward = false;
        const double ref = s.target_V != 0.0 ? s.target_V : from;
        const int pol = ref < 0.0 ? -1 : 1;
        for (long i = 0; i < n; ++i) {
            const double V = n == 1 ? s.target_V : from + delta * static_cast<double>(i) / static_cast<double>(n - 1);
            out.push_back({V, s.dwell_s, forward, pol});
        }
        from = s.target_V;
    }
    return out;
}

double Waveform::peak_abs_V() const {
    double m = std::abs(start_V);
    for (const auto& s : segments) m = std::max(m, std::abs(s.target_V));
    return m;
}

int Waveform::polarity() const {
    bool pos = start_V > 0.0, neg = start_V < 0.0;
    for (const auto& s : segments) {
        pos = pos || s.target_V > 0.0;
        neg = neg || s.target_V < 0.0;
    }
    if (pos && neg) return 0;
    return neg ? -1 : 1;
}

Waveform make_sweep(double start, double stop, double step, double dwell, bool return_to_start) {
    if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step) || !std::isfinite(dwell))
        throw std::invalid_argument("sweep arguments must be finite");
    if (!(step > 0.0)) throw std::invalid_argument("sweep step must be positive");
    if (!(dwell > 0.0)) throw std::invalid_argument("sweep dwell must be positive");
    if (start == stop) throw std::invalid_argument("sweep start and stop coincide");
    if (step > std::abs(stop - start)) throw std::invalid_argument("sweep step exceeds the sweep span");
    Waveform wf;
    wf.start_V = start;
    wf.segments.push_back({stop, step, dwell});
    if (return_to_start) wf.segments.push_back({start, step, dwell});
    std::ostringstream label;
    label << "sweep " << start << "->" << stop << (return_to_start ? "->" + format_double(start, 6) : "");
    wf.label = label.str();
    return wf;
}

Waveform make_hold(double V, double duration_s) {
    if (!std::isfinite(V)) throw std::invalid_argument("hold bias must be finite");
    if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw std::invalid_argument("hold duration must be positive");
    Waveform wf;
    wf.start_V = V;
    wf.segments.push_back({V, 1.0, duration_s});
    wf.label = "hold " + format_double(V, 6) + " V";
    return wf;
}

Waveform make_dual_sweep(double amplitude, double step, double dwell) {
    if (!(amplitude > 0.0)) throw std::invalid_argument("dual sweep amplitude must be positive");
    Waveform wf = make_sweep(0.0, amplitude, step, dwell, true);
    wf.segments.push_back({-amplitude, step, dwell});
    wf.segments.push_back({0.0, step, dwell});
    wf.label = "dual sweep +-" + format_double(amplitude, 6);
    return wf;
}

// ---------------------------------------------------------------------------
// Physics

double builtin_potential(const UnitState& s, const ModelParams& p) { return p.kappa * s.c; }

double molecular_conductance(const UnitState& s, const ModelParams& p) {
    return s.device_factor * p.G_red * (1.0 - p.alpha_ox * s.x);
}

double leak_conductance(const UnitState& s, const ModelParams& p) {
    return s.device_factor * p.G_leak * std::exp(p.leak_gamma * (s.x - x_pristine));
}

double instantaneous_current(const UnitState& s, double V, const ModelParams& p) {
    const double Vn = V - builtin_potential(s, p);
    const double channel = molecular_conductance(s, p) * p.V_decay * sign_of(Vn) *
                           -std::expm1(-std::abs(Vn) / p.V_decay);
    return channel + leak_conductance(s, p) * Vn;
}

UnitState step_dynamics(const UnitState& s, double V, double dt, const ModelParams& p) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step_dynamics: dt must be positive");
    if (!std::isfinite(V)) throw std::invalid_argument("step_dynamics: bias must be finite");
    UnitState out = s;
    out.elapsed_s += dt;
    if (V == 0.0) return out;

    // Anion drift toward the field-dependent target; faster while opposing the stored polarity.
    const double rate = activation(V, p.V_act_ion) / p.tau_c;
    const double target = p.c_sat * std::tanh(V / p.V_c);
    double c = s.c;
    if (c * V < 0.0) {
        const double fast = p.release_gain * rate;
        const double t_zero = std::log((target - c) / target) / fast;
        if (t_zero >= dt) {
            c = target + (c - target) * std::exp(-fast * dt);
        } else {
            c = -target * std::expm1(-rate * (dt - t_zero));
        }
    } else {
        c = target + (c - target) * std::exp(-rate * dt);
    }
    out.c = std::clamp(c, -p.c_sat, p.c_sat);

    // Redox: oxidation toward x_on under positive bias, reduction toward 0 under negative bias.
    const double h = activation(V, p.V_act_redox);
    const double vp = std::max(V, 0.0), vn = std::max(-V, 0.0);
    const double b = h * (p.k_ox * vp + p.k_red * vn);
    if (b > 0.0) {
        const double x_eq = h * p.k_ox * vp * p.x_on / b;
        out.x = std::clamp(x_eq + (s.x - x_eq) * std::exp(-b * dt), 0.0, 1.0);
    }
    return out;
}

WaveformResult apply_waveform(const UnitState& s, const Waveform& wf, const ModelParams& p,
                              std::optional<std::uint64_t> noise_seed) {
    const auto samples = wf.expand();
    WaveformResult r{s, {}};
    r.trace.samples.reserve(samples.size());
    std::optional<normal_source> noise;
    if (noise_seed) noise.emplace(*noise_seed);
    for (const auto& w : samples) {
        r.state = step_dynamics(r.state, w.V, w.dwell_s, p);
        const double Vp = probe_voltage(w.V, w.polarity, p.eps_read);
        double I = instantaneous_current(r.state, Vp, p);
        if (noise) I *= std::exp(p.sigma_c2c * (*noise)());
        r.trace.samples.push_back({r.state.elapsed_s, w.V, I, I / Vp, w.forward});
    }
    return r;
}

UnitState evolve(const UnitState& s, const Waveform& wf, const ModelParams& p) {
    UnitState out = s;
    for (const auto& w : wf.expand()) out = step_dynamics(out, w.V, w.dwell_s, p);
    return out;
}

double read_conductance(const UnitState& s, const ModelParams& p, double V_read) {
    const double Vp = probe_voltage(V_read, 1, p.eps_read);
    return instantaneous_current(s, Vp, p) / Vp;
}

double read_conductance_noisy(const UnitState& s, const ModelParams& p, double V_read, std::uint64_t seed,
                              int samples) {
    if (samples < 1) throw std::invalid_argument("read needs at least one sample");
    const double G = read_conductance(s, p, V_read);
    normal_source noise(seed);
    double acc = 0.0;
    for (int i = 0; i < samples; ++i) acc += std::exp(p.sigma_c2c * noise());
    return G * acc / samples;
}

// ---------------------------------------------------------------------------
// Trace analysis

void IVTrace::write_csv(std::ostream& os) const {
    os << "time_s,voltage_V,current_A,conductance_S,branch\n";
    for (const auto& s : samples)
        os << format_double(s.t_s, 12) << ',' << format_double(s.V, 12) << ',' << format_double(s.I, 12) << ','
           << format_double(s.G, 12) << ',' << (s.forward ? "fwd" : "bwd") << '\n';
}

std::string IVTrace::to_csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
}

namespace {

/// First contiguous forward run of the given sign and the backward run that follows it.
std::pair<std::vector<IVSample>, std::vector<IVSample>> branches(const IVTrace& t, int sign) {
    std::vector<IVSample> fwd, bwd;
    const auto& s = t.samples;
    std::size_t i = 0;
    while (i < s.size() && !(s[i].forward && sign_of(s[i].V) == sign)) ++i;
    while (i < s.size() && s[i].forward && sign_of(s[i].V) != -sign) {
        if (sign_of(s[i].V) == sign) fwd.push_back(s[i]);
        ++i;
    }
    while (i < s.size() && !s[i].forward && sign_of(s[i].V) != -sign) {
        if (sign_of(s[i].V) == sign) bwd.push_back(s[i]);
        ++i;
    }
    return {fwd, bwd};
}

std::optional<double> interpolate(std::vector<IVSample> run, double V) {
    std::sort(run.begin(), run.end(), [](const IVSample& a, const IVSample& b) { return a.V < b.V; });
    for (std::size_t i = 0; i + 1 < run.size(); ++i) {
        const auto& a = run[i];
        const auto& b = run[i + 1];
        if (V >= a.V && V <= b.V) {
            if (b.V == a.V) return a.G;
            return a.G + (b.G - a.G) * (V - a.V) / (b.V - a.V);
        }
    }
    if (run.size() == 1 && run[0].V == V) return run[0].G;
    return std::nullopt;
}

}  // namespace

double memory_window(const IVTrace& trace, double V_read) {
    if (V_read == 0.0 || !std::isfinite(V_read)) throw std::out_of_range("memory window needs a nonzero read voltage");
    auto [fwd, bwd] = branches(trace, sign_of(V_read));
    auto gf = interpolate(fwd, V_read);
    auto gb = interpolate(bwd, V_read);
    if (!gf || !gb) throw std::out_of_range("read voltage outside the trace branches");
    return *gf - *gb;
}

std::optional<double> back_branch_crossing(const IVTrace& trace, int polarity) {
    auto [fwd, bwd] = branches(trace, polarity < 0 ? -1 : 1);
    for (std::size_t i = 1; i < bwd.size(); ++i)
        if (bwd[i].G < 0.0) return bwd[i].V;
    return std::nullopt;
}

PowerReport peak_power(const IVTrace& trace) {
    if (trace.samples.empty()) throw std::invalid_argument("peak power of an empty trace");
    double peak = 0.0;
    for (const auto& s : trace.samples) peak = std::max(peak, std::abs(s.I * s.V));
    return {peak, peak / molecules_per_unit};
}

// ---------------------------------------------------------------------------
// Units and retention

UnitState spawn_unit(const ModelParams& p, std::uint64_t device_seed) {
    UnitState u;
    normal_source g(device_seed);
    u.device_factor = std::exp(p.sigma_d2d * g());
    return u;
}

namespace {

void drift(const UnitState& s, double duration, const ModelParams& p, std::uint64_t seed, double sample_every,
           const std::function<void(const UnitState&)>& on_sample, UnitState& out) {
    out = s;
    if (!(duration >= 0.0)) throw std::invalid_argument("retention duration must be non-negative");
    if (duration == 0.0) return;
    const double h_max = p.drift_tau / 10.0;
    const auto n = static_cast<long>(std::ceil(duration / h_max - 1e-12));
    const double h = duration / static_cast<double>(n);
    const double a = std::exp(-h / p.drift_tau);
    const double kick = p.drift_sigma * std::sqrt(1.0 - a * a);
    normal_source g(seed);
    double dx = 0.0, dc = 0.0, next_sample = sample_every;
    for (long i = 1; i <= n; ++i) {
        dx = dx * a + kick * g();
        dc = dc * a + kick * g();
        if (p.drift_sigma > 0.0) {
            out.x = std::clamp(s.x + dx, 0.0, 1.0);
            out.c = std::clamp(s.c + dc, -p.c_sat, p.c_sat);
        }
        out.elapsed_s = s.elapsed_s + h * static_cast<double>(i);
        if (on_sample && sample_every > 0.0 && h * static_cast<double>(i) >= next_sample - 1e-9) {
            on_sample(out);
            next_sample += sample_every;
        }
    }
}

}  // namespace

UnitState retention_evolve(const UnitState& s, double duration_s, const ModelParams& p, std::uint64_t seed) {
    UnitState out;
    drift(s, duration_s, p, seed, 0.0, {}, out);
    return out;
}

std::vector<double> retention_trace(const UnitState& s, double duration_s, double sample_every_s,
                                    const ModelParams& p, std::uint64_t seed, double V_read) {
    std::vector<double> G{read_conductance(s, p, V_read)};
    UnitState out;
    drift(s, duration_s, p, seed, sample_every_s,
          [&](const UnitState& u) { G.push_back(read_conductance(u, p, V_read)); }, out);
    return G;
}

}  // namespace mhdd
