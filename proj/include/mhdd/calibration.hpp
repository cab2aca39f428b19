#pragma once

#include "mhdd/device_model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mhdd {

/// One calibration target. Observable grammar (voltages in volts):
///   g_fwd@V, g_bwd@V            forward/backward conductance on the +-3 V dual sweep (step 0.05 V)
///   window@V                    memory window on the +-3 V dual sweep
///   window_stop@S:V             memory window at V on a +-S dual sweep with 0.1 V steps
///   zero@k                      k = 1..4: zero-bias reads at the four loop endpoints of the +-3 V sweep
///   crossing                    back-branch sign-reversal voltage of the positive loop
///   peak_power                  peak |I V| of the +-3 V sweep, W
///   pulse_g@V                   conductance at the end of a 0 -> V ramp from a pristine unit
///   read_after@S                G(0.1 V) after a 0 -> S -> 0 sweep (0.1 V steps) from a pristine unit
struct CalibrationTarget {
    std::string name;
    std::string observable;
    double value = 0.0;
    double weight = 1.0;
};

std::vector<CalibrationTarget> parse_targets(const std::string& csv_text);
std::vector<CalibrationTarget> load_targets(const std::string& path);

/// Simulates the protocols behind the observables once per parameter set.
class ObservableEvaluator {
public:
    explicit ObservableEvaluator(ModelParams p);
    double operator()(const std::string& observable);
    const IVTrace& dual_trace(double amplitude, double step);

private:
    struct dual {
        double amplitude, step;
        IVTrace trace;
    };
    ModelParams p_;
    std::vector<dual> cache_;
};

double evaluate_observable(const std::string& observable, const ModelParams& p);

struct NelderMeadOptions {
    int max_evals = 2000;
    double f_tol = 1e-10;
    double x_tol = 1e-8;
    double initial_step = 0.1;
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = 0.0;
    int evals = 0;
    bool converged = false;
};

/// Adaptive Nelder-Mead; deterministic for a given start point and step.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const NelderMeadOptions& opt = {});

struct TargetResidual {
    std::string name;
    std::string observable;
    double target = 0.0;
    double simulated = 0.0;
    double residual = 0.0;  ///< log-magnitude error, or the sign penalty when signs disagree
};

struct CalibrationOptions {
    /// Parameters varied in log space; empty means the dynamic and conductance parameters.
    std::vector<std::string> free_parameters;
    NelderMeadOptions optimizer{};
    double sign_penalty = 10.0;
};

struct CalibrationResult {
    ModelParams params;
    double loss = 0.0;
    bool converged = false;
    int evaluations = 0;
    std::vector<TargetResidual> report;
};

/// Weighted squared log-magnitude errors plus a sign-mismatch penalty.
double calibration_loss(const ModelParams& p, const std::vector<CalibrationTarget>& targets,
                        double sign_penalty = 10.0, std::vector<TargetResidual>* report = nullptr);

CalibrationResult calibrate(const std::vector<CalibrationTarget>& targets, const ModelParams& seed,
                            const CalibrationOptions& opt = {});

}  // namespace mhdd
