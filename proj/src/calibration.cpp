#include "mhdd/calibration.hpp"

#include "mhdd/errors.hpp"
#include "mhdd/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mhdd {

std::vector<CalibrationTarget> parse_targets(const std::string& text) {
    std::vector<CalibrationTarget> out;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = trim(std::string_view(text).substr(pos, nl - pos));
        if (!line.empty() && line[0] != '#') {
            std::vector<std::string> cols;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cols.push_back(trim(cell));
            if (!header_seen) {
                if (cols != std::vector<std::string>{"name", "observable", "value", "weight"})
                    throw parse_error("expected header name,observable,value,weight", pos);
                header_seen = true;
            } else {
                if (cols.size() != 4) throw parse_error("expected 4 columns", pos);
                try {
                    out.push_back({cols[0], cols[1], parse_double(cols[2]), parse_double(cols[3])});
                } catch (const std::invalid_argument& e) {
                    throw parse_error(e.what(), pos);
                }
            }
        }
        pos = nl + 1;
    }
    if (!header_seen) throw parse_error("missing header", 0);
    return out;
}

std::vector<CalibrationTarget> load_targets(const std::string& path) { return parse_targets(read_file(path)); }

// ---------------------------------------------------------------------------

ObservableEvaluator::ObservableEvaluator(ModelParams p) : p_(p) {}

const IVTrace& ObservableEvaluator::dual_trace(double amplitude, double step) {
    for (const auto& d : cache_)
        if (d.amplitude == amplitude && d.step == step) return d.trace;
    auto r = apply_waveform(UnitState{}, make_dual_sweep(amplitude, step, 0.02), p_);
    cache_.push_back({amplitude, step, std::move(r.trace)});
    return cache_.back().trace;
}

namespace {

double arg_after(const std::string& obs, std::size_t at) { return parse_double(obs.substr(at)); }

double g_at(const IVTrace& t, double V, bool forward) {
    for (const auto& s : t.samples)
        if (s.forward == forward && std::abs(s.V - V) < 1e-9) return s.G;
    throw std::out_of_range("no sample at the requested voltage");
}

}  // namespace

double ObservableEvaluator::operator()(const std::string& obs) {
    const auto at = obs.find('@');
    const std::string kind = obs.substr(0, at);
    if (kind == "g_fwd" || kind == "g_bwd") {
        const double V = arg_after(obs, at + 1);
        return g_at(dual_trace(3.0, 0.05), V, kind == "g_fwd");
    }
    if (kind == "window") return memory_window(dual_trace(3.0, 0.05), arg_after(obs, at + 1));
    if (kind == "window_stop") {
        const std::string args = obs.substr(at + 1);
        const auto colon = args.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("window_stop needs S:V");
        return memory_window(dual_trace(parse_double(args.substr(0, colon)), 0.1), parse_double(args.substr(colon + 1)));
    }
    if (kind == "zero") {
        const int k = static_cast<int>(arg_after(obs, at + 1));
        const auto& s = dual_trace(3.0, 0.05).samples;
        const std::size_t leg = s.size() / 4;
        const std::size_t idx[] = {0, 2 * leg - 1, 2 * leg, s.size() - 1};
        if (k < 1 || k > 4) throw std::invalid_argument("zero@k needs k in 1..4");
        return s[idx[k - 1]].G;
    }
    if (kind == "crossing") return back_branch_crossing(dual_trace(3.0, 0.05)).value_or(0.0);
    if (kind == "peak_power") return peak_power(dual_trace(3.0, 0.05)).peak_W;
    if (kind == "pulse_g") {
        const double V = arg_after(obs, at + 1);
        auto r = apply_waveform(UnitState{}, make_sweep(0.0, V, 0.05, 0.02, false), p_);
        return r.trace.samples.back().G;
    }
    if (kind == "read_after") {
        const double S = arg_after(obs, at + 1);
        auto r = apply_waveform(UnitState{}, make_sweep(0.0, S, 0.1, 0.02, true), p_);
        return read_conductance(r.state, p_, 0.1);
    }
    throw std::invalid_argument("unknown observable '" + obs + "'");
}

double evaluate_observable(const std::string& observable, const ModelParams& p) {
    ObservableEvaluator ev(p);
    return ev(observable);
}

// ---------------------------------------------------------------------------

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const NelderMeadOptions& opt) {
    const std::size_t n = x0.size();
    if (n == 0) throw std::invalid_argument("nelder_mead needs at least one variable");
    const double dn = static_cast<double>(n);
    const double alpha = 1.0, beta = 1.0 + 2.0 / dn, gamma = 0.75 - 1.0 / (2.0 * dn), delta = 1.0 - 1.0 / dn;

    std::vector<std::vector<double>> pts(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += opt.initial_step;
    std::vector<double> fv(n + 1);
    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    };
    for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(pts[i]);

    std::vector<std::size_t> order(n + 1);
    bool converged = false;
    while (evals < opt.max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

        double spread = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t j = 0; j < n; ++j) spread = std::max(spread, std::abs(pts[i][j] - pts[best][j]));
        if (std::abs(fv[worst] - fv[best]) <= opt.f_tol && spread <= opt.x_tol) {
            converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i)
            if (i != worst)
                for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j] / dn;
        auto along = [&](double t) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j) x[j] = centroid[j] + t * (pts[worst][j] - centroid[j]);
            return x;
        };

        auto xr = along(-alpha);
        const double fr = eval(xr);
        if (fr < fv[best]) {
            auto xe = along(-alpha * beta);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        auto xc = along(outside ? -alpha * gamma : gamma);
        const double fc = eval(xc);
        if (fc < (outside ? fr : fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + delta * (pts[i][j] - pts[best][j]);
            fv[i] = eval(pts[i]);
        }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    const auto bi = static_cast<std::size_t>(it - fv.begin());
    return {pts[bi], fv[bi], evals, converged};
}

// ---------------------------------------------------------------------------

double calibration_loss(const ModelParams& p, const std::vector<CalibrationTarget>& targets, double sign_penalty,
                        std::vector<TargetResidual>* report) {
    ObservableEvaluator ev(p);
    double loss = 0.0;
    for (const auto& t : targets) {
        const double sim = ev(t.observable);
        double r;
        if (!(sim * t.value > 0.0) || !std::isfinite(sim)) {
            r = sign_penalty;
            loss += t.weight * sign_penalty;
        } else {
            r = std::log(std::abs(sim) / std::abs(t.value));
            loss += t.weight * r * r;
        }
        if (report) report->push_back({t.name, t.observable, t.value, sim, r});
    }
    return loss;
}

CalibrationResult calibrate(const std::vector<CalibrationTarget>& targets, const ModelParams& seed,
                            const CalibrationOptions& opt) {
    if (targets.size() < 6) throw std::invalid_argument("calibration needs at least 6 targets");
    seed.validate();
    std::vector<std::string> names = opt.free_parameters;
    if (names.empty())
        names = {"G_red", "alpha_ox", "V_decay", "G_leak", "leak_gamma", "kappa", "c_sat", "V_c",
                 "tau_c", "V_act_ion", "release_gain", "k_ox", "k_red", "V_act_redox", "x_on"};
    std::vector<double> u0;
    for (const auto& n : names) {
        const double v = seed.get(n);
        if (!(v > 0.0)) throw std::invalid_argument("free parameter '" + n + "' must be positive in the seed");
        u0.push_back(std::log(v));
    }
    auto decode = [&](const std::vector<double>& u) {
        ModelParams p = seed;
        for (std::size_t i = 0; i < names.size(); ++i) p.set(names[i], std::exp(u[i]));
        return p;
    };
    auto objective = [&](const std::vector<double>& u) {
        ModelParams p = decode(u);
        try {
            p.validate();
        } catch (const std::invalid_argument&) {
            return 1e12;
        }
        return calibration_loss(p, targets, opt.sign_penalty);
    };
    const auto nm = nelder_mead(objective, u0, opt.optimizer);
    CalibrationResult res;
    res.params = decode(nm.x);
    res.converged = nm.converged;
    res.evaluations = nm.evals;
    res.loss = calibration_loss(res.params, targets, opt.sign_penalty, &res.report);
    return res;
}

}  // namespace mhdd
