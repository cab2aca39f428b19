#include "mhdd/device_model.hpp"
#include "mhdd/level_codec.hpp"
#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

using namespace mhdd;
using Catch::Approx;

namespace {

/// Reference SplitMix64 (Steele, Lea, Flood), written independently of the library.
std::uint64_t splitmix_ref(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double act_ref(double V, double Va) { return std::sinh(std::abs(V) / Va) / std::sinh(1.0 / Va); }

/// Forward Euler of the (x, c) rate equations at constant bias.
UnitState euler(UnitState s, double V, double dt, const ModelParams& p, int steps) {
    const double h = dt / steps;
    const double rate = act_ref(V, p.V_act_ion) / p.tau_c;
    const double target = p.c_sat * std::tanh(V / p.V_c);
    const double hr = act_ref(V, p.V_act_redox);
    for (int i = 0; i < steps; ++i) {
        const double k = s.c * V < 0.0 ? p.release_gain * rate : rate;
        const double dc = k * (target - s.c);
        const double dx = V > 0.0 ? hr * p.k_ox * V * (p.x_on - s.x) : -hr * p.k_red * (-V) * s.x;
        s.c += h * dc;
        s.x += h * dx;
    }
    return s;
}

double current_ref(const UnitState& s, double V, const ModelParams& p) {
    const double Vn = V - p.kappa * s.c;
    const double Gm = s.device_factor * p.G_red * (1.0 - p.alpha_ox * s.x);
    const double Gl = s.device_factor * p.G_leak * std::exp(p.leak_gamma * (s.x - 0.511));
    const double sgn = (Vn > 0) - (Vn < 0);
    return Gm * p.V_decay * sgn * (1.0 - std::exp(-std::abs(Vn) / p.V_decay)) + Gl * Vn;
}

}  // namespace

TEST_CASE("splitmix64 matches the reference generator", "[rng]") {
    std::uint64_t s = 0;
    splitmix64 g(0);
    CHECK(g.next() == 0xE220A8397B1DCDAFULL);
    CHECK(splitmix_ref(s) == 0xE220A8397B1DCDAFULL);
    std::uint64_t r = 1234567;
    splitmix64 h(1234567);
    for (int i = 0; i < 1000; ++i) REQUIRE(h.next() == splitmix_ref(r));
}

TEST_CASE("derived seeds are deterministic and distinct", "[rng]") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
    CHECK(seen.size() == 1000);
    CHECK(derive_seed(42, 7) == derive_seed(42, 7));
    CHECK(derive_seed(42, 7) != derive_seed(43, 7));
}

TEST_CASE("parameter sets validate and round-trip through text", "[params]") {
    const auto p = ModelParams::calibrated();
    REQUIRE_NOTHROW(p.validate());
    CHECK(params_from_text(params_to_text(p)) == p);
    CHECK(ModelParams::names().size() == 20);
    CHECK_THROWS_AS(params_from_text("bogus=1\n"), std::invalid_argument);
    CHECK_THROWS_AS(params_from_text("G_red=-1\n"), std::invalid_argument);
    CHECK_THROWS_AS(params_from_text("c_sat=1.5\n"), std::invalid_argument);
    auto q = p;
    q.set("kappa", 2.0);
    CHECK(q.get("kappa") == 2.0);
    CHECK_THROWS(q.get("nope"));
}

TEST_CASE("waveforms expand inclusively per segment", "[waveform]") {
    const auto wf = make_sweep(0.0, 3.0, 0.05, 0.02, true);
    const auto s = wf.expand();
    REQUIRE(s.size() == 122);
    CHECK(s.front().V == 0.0);
    CHECK(s[60].V == Approx(3.0));
    CHECK(s[60].forward);
    CHECK_FALSE(s[61].forward);
    CHECK(s.back().V == 0.0);
    CHECK(wf.polarity() == 1);
    CHECK(make_dual_sweep(1.0, 0.1, 0.02).polarity() == 0);
    CHECK(make_dual_sweep(1.0, 0.1, 0.02).expand().size() == 44);
    CHECK(make_hold(-6.0, 1e-3).expand().size() == 1);
    CHECK_THROWS_AS(make_sweep(0.0, 1.0, 0.0, 0.02, false), std::invalid_argument);
    CHECK_THROWS_AS(make_sweep(0.0, 0.0, 0.1, 0.02, false), std::invalid_argument);
    CHECK_THROWS_AS(make_hold(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("current follows the two-channel junction law", "[physics]") {
    const auto p = ModelParams::calibrated();
    for (double x : {0.0, 0.3, 0.511, 0.6})
        for (double c : {-0.5, 0.0, 0.2, 0.9})
            for (double V : {-3.0, -0.5, -0.005, 0.005, 0.1, 2.0}) {
                UnitState s;
                s.x = x;
                s.c = c;
                s.device_factor = 1.03;
                REQUIRE(instantaneous_current(s, V, p) == Approx(current_ref(s, V, p)).epsilon(1e-12).margin(1e-24));
            }
}

TEST_CASE("exact integrator agrees with a fine forward-Euler solution", "[physics]") {
    const auto p = ModelParams::calibrated();
    struct Case {
        double x, c, V, dt;
    };
    for (const auto& k : {Case{0.511, 0.0, 2.0, 0.02}, Case{0.511, 0.0, -1.5, 0.02}, Case{0.3, 0.5, 4.0, 0.02},
                          Case{0.55, 0.6, -3.0, 0.01}, Case{0.2, -0.4, 1.0, 0.05}, Case{0.6, 0.0, 8.0, 1e-4}}) {
        UnitState s;
        s.x = k.x;
        s.c = k.c;
        const auto exact = step_dynamics(s, k.V, k.dt, p);
        const auto ref = euler(s, k.V, k.dt, p, 200000);
        INFO("V = " << k.V << " c0 = " << k.c);
        CHECK(exact.x == Approx(ref.x).margin(2e-5));
        CHECK(exact.c == Approx(ref.c).margin(2e-5));
        CHECK(exact.elapsed_s == Approx(k.dt));
    }
}

TEST_CASE("zero bias freezes the state", "[physics]") {
    const auto p = ModelParams::calibrated();
    UnitState s;
    s.x = 0.4;
    s.c = 0.3;
    const auto out = step_dynamics(s, 0.0, 100.0, p);
    CHECK(out.x == s.x);
    CHECK(out.c == s.c);
    CHECK_THROWS_AS(step_dynamics(s, 1.0, 0.0, p), std::invalid_argument);
}

TEST_CASE("zero-bias reads use the probe voltage", "[physics]") {
    const auto p = ModelParams::calibrated();
    UnitState s;
    s.c = 0.1;
    CHECK(read_conductance(s, p, 0.0) == Approx(current_ref(s, p.eps_read, p) / p.eps_read));
    CHECK(read_conductance(s, p, -0.001) == Approx(current_ref(s, -p.eps_read, p) / -p.eps_read));
}

TEST_CASE("noisy reads are multiplicative lognormal", "[noise]") {
    const auto p = ModelParams::calibrated();
    const UnitState s;
    const double G = read_conductance(s, p, 0.1);
    double m = 0.0, m2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double l = std::log(read_conductance_noisy(s, p, 0.1, derive_seed(9, i)) / G);
        m += l / n;
        m2 += l * l / n;
    }
    CHECK(std::abs(m) < 4.0 * p.sigma_c2c / std::sqrt(n));
    CHECK(std::sqrt(m2 - m * m) == Approx(p.sigma_c2c).epsilon(0.03));
    CHECK(read_conductance_noisy(s, p, 0.1, 5) == read_conductance_noisy(s, p, 0.1, 5));
}

TEST_CASE("device factors follow the device-to-device spread", "[noise]") {
    auto p = ModelParams::calibrated();
    auto q = p;
    q.sigma_d2d = 0.0;
    CHECK(spawn_unit(q, 77).device_factor == 1.0);
    CHECK(spawn_unit(p, 77).x == x_pristine);
    // Monte-Carlo oracle: expected 5-device sample uniformity
    double mean = 0.0;
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        std::vector<double> f;
        for (int i = 0; i < 5; ++i) f.push_back(spawn_unit(p, derive_seed(d, i)).device_factor);
        mean += uniformity_pct(f) / draws;
    }
    CHECK(mean == Approx(96.95).margin(1.0));
}

TEST_CASE("trace analysis on the calibrated sweep", "[trace]") {
    const auto p = ModelParams::calibrated();
    const auto r = apply_waveform(UnitState{}, make_dual_sweep(3.0, 0.05, 0.02), p);
    const auto pw = peak_power(r.trace);
    double ref = 0.0;
    for (const auto& s : r.trace.samples) ref = std::max(ref, std::abs(s.I * s.V));
    CHECK(pw.peak_W == ref);
    CHECK(pw.per_molecule_W == Approx(pw.peak_W / 235.0));
    CHECK(pw.peak_W > 550e-12);
    CHECK(pw.peak_W < 830e-12);
    const auto x = back_branch_crossing(r.trace);
    REQUIRE(x.has_value());
    CHECK(*x > 0.0);
    CHECK(*x < 3.0);
    CHECK(r.trace.to_csv().rfind("time_s,voltage_V,current_A,conductance_S,branch\n", 0) == 0);
}

TEST_CASE("per-molecule power division", "[trace]") {
    IVTrace t;
    t.samples.push_back({0.0, 3.0, 230e-12, 0.0, true});
    const auto pw = peak_power(t);
    CHECK(pw.peak_W == Approx(690e-12));
    CHECK(pw.per_molecule_W == Approx(2.94e-12).epsilon(0.01));
    CHECK_THROWS_AS(peak_power(IVTrace{}), std::invalid_argument);
}

TEST_CASE("retention drift is deterministic and optional", "[retention]") {
    auto p = ModelParams::calibrated();
    UnitState s;
    s.x = 0.55;
    s.c = 0.4;
    CHECK(retention_evolve(s, 0.0, p, 1) == s);
    CHECK(retention_evolve(s, 1e4, p, 1) == retention_evolve(s, 1e4, p, 1));
    auto q = p;
    q.drift_sigma = 0.0;
    const auto still = retention_evolve(s, 1e4, q, 1);
    CHECK(still.x == s.x);
    CHECK(still.c == s.c);
    const auto tr = retention_trace(s, 1e4, 100.0, p, 3);
    CHECK(tr.size() == 101);
    CHECK_THROWS_AS(retention_evolve(s, -1.0, p, 1), std::invalid_argument);
}
