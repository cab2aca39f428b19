#include "mhdd/errors.hpp"
#include "mhdd/level_codec.hpp"
#include "mhdd/rng.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace mhdd;
using Catch::Approx;

TEST_CASE("codec maps values to voltages and conductances", "[codec]") {
    const LevelCodec c;
    CHECK(level_to_voltage(c, 0) == Approx(0.5));
    CHECK(level_to_voltage(c, 35) == Approx(4.0));
    CHECK(level_to_voltage(c, 24) == Approx(2.9));
    CHECK(level_to_voltage(c, 63) == Approx(6.8));
    CHECK(level_to_conductance(c, 0) == Approx(0.4e-9));
    CHECK(level_to_conductance(c, 63) == Approx(7.3e-9));
    const double gap = (7.3e-9 - 0.4e-9) / 63.0;
    for (int v = 1; v < 64; ++v)
        CHECK(level_to_conductance(c, v) - level_to_conductance(c, v - 1) == Approx(gap));
    for (int v = 0; v < 64; ++v) CHECK(verify_window(c, v) <= 0.25 * gap * (1.0 + 1e-12));
    CHECK(staircase_target(c, 0) == Approx(0.4e-9));
    CHECK(staircase_target(c, 95) == Approx(7.3e-9));
    CHECK(staircase_voltage(c, 95) == Approx(10.0));
    CHECK_THROWS_AS(level_to_voltage(c, 64), std::out_of_range);
    CHECK_THROWS_AS(level_to_conductance(c, -1), std::out_of_range);
}

TEST_CASE("codec validation and text round trip", "[codec]") {
    LevelCodec c;
    c.verify_tol = 0.015;
    c.read_samples = 64;
    CHECK(codec_from_text(codec_to_text(c)) == c);
    LevelCodec bad;
    bad.n_used = 97;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.V_step = 0.2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.G_hi = bad.G_lo;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS(codec_from_text("unknown_key=3\n"));
}

TEST_CASE("decode uses relative distance with ties to the lower level", "[codec]") {
    const LevelCodec c;
    for (int v = 0; v < 64; ++v) CHECK(decode_level(c, level_to_conductance(c, v)).level == v);
    for (int v = 0; v < 63; ++v) {
        const double a = level_to_conductance(c, v), b = level_to_conductance(c, v + 1);
        const double h = 2.0 * a * b / (a + b);  // equal relative distance to both neighbours
        CHECK(decode_level(c, h).level == v);
        CHECK(decode_level(c, h * (1.0 + 1e-9)).level == v + 1);
        CHECK(decode_level(c, h * (1.0 - 1e-9)).level == v);
    }
    CHECK(decode_level(c, -1e-9).level == 0);
    CHECK(decode_level(c, 1e-6).level == 63);
}

TEST_CASE("program-and-verify hits every level without noise", "[codec]") {
    const LevelCodec c;
    const auto p = ModelParams::calibrated();
    UnitState u;
    for (int v : {0, 1, 17, 32, 53, 63, 40, 8, 0, 63}) {
        const auto rep = program_level(u, v, c, p);
        u = rep.state;
        INFO("level " << v);
        CHECK(rep.target_level == v);
        CHECK(std::abs(rep.final_G - level_to_conductance(c, v)) <= verify_window(c, v));
        CHECK(read_level(u, c, p).level == v);
        CHECK(rep.nominal_V == Approx(level_to_voltage(c, v)));
    }
}

TEST_CASE("rewriting a stored value issues no waveform", "[codec]") {
    const LevelCodec c;
    const auto p = ModelParams::calibrated();
    const auto first = program_level(UnitState{}, 21, c, p);
    REQUIRE_FALSE(first.attempts.empty());
    const auto again = program_level(first.state, 21, c, p);
    CHECK(again.attempts.empty());
    CHECK(again.state == first.state);
}

TEST_CASE("writes only use the requested polarity", "[codec]") {
    const LevelCodec c;
    const auto p = ModelParams::calibrated();
    const auto up = program_level(UnitState{}, 50, c, p);
    ProgramOptions opt;
    opt.keep_waveforms = true;
    const auto down = program_level(up.state, 10, c, p, opt);
    REQUIRE_FALSE(down.attempts.empty());
    CHECK(down.attempts.front().polarity == -1);
    CHECK(down.waveforms.front().label == "program-");
    CHECK(down.waveforms.size() == down.attempts.size());
    opt.allowed_polarity = 1;
    CHECK_THROWS_AS(program_level(up.state, 10, c, p, opt), program_failure);
}

TEST_CASE("an unreachable target raises program_failure", "[codec]") {
    LevelCodec c;
    c.V_max = 1.0;
    try {
        (void)program_level(UnitState{}, 63, c, ModelParams::calibrated());
        FAIL("expected program_failure");
    } catch (const program_failure& e) {
        CHECK(e.target_level() == 63);
        CHECK(e.last_level() < 63);
    }
}

TEST_CASE("averaged reads keep the worst-case half gap above two sigma", "[codec]") {
    const LevelCodec c;
    const auto p = ModelParams::calibrated();
    const double gap = (c.G_hi - c.G_lo) / (c.n_used - 1);
    const double sigma_eff = p.sigma_c2c / std::sqrt(static_cast<double>(c.read_samples));
    CHECK(0.5 * gap > 2.0 * sigma_eff * c.G_hi);
    CHECK_FALSE(0.5 * gap > 2.0 * p.sigma_c2c * c.G_hi);  // a single-sample read would not suffice
}

TEST_CASE("monte-carlo misread rate of stored levels is zero", "[codec]") {
    const LevelCodec c;
    const auto p = ModelParams::calibrated();
    int misreads = 0, reads = 0;
    for (int v = 0; v < 64; v += 3) {
        const auto rep = program_level(UnitState{}, v, c, p, {derive_seed(5, v)});
        for (int k = 0; k < 200; ++k, ++reads)
            if (read_level(rep.state, c, p, derive_seed(6, v * 1000 + k)).level != v) ++misreads;
    }
    CHECK(reads == 4400);
    CHECK(misreads == 0);
}

TEST_CASE("noisy random writes always land", "[codec]") {
    const LevelCodec c;
    const auto p = ModelParams::calibrated();
    splitmix64 g(11);
    UnitState u = spawn_unit(p, 3);
    for (int i = 0; i < 300; ++i) {
        const int v = static_cast<int>(g.next() % 64);
        const auto rep = program_level(u, v, c, p, {derive_seed(12, i)});
        u = rep.state;
        REQUIRE(read_level(u, c, p).level == v);
    }
}

TEST_CASE("uniformity and linearity metrics", "[codec]") {
    CHECK(uniformity_pct({1.0, 1.0, 1.0}) == 100.0);
    CHECK(uniformity_pct({9.0, 10.0, 11.0}) == Approx(90.0));
    CHECK(uniformity_pct({-9.0, -10.0, -11.0}) == Approx(90.0));
    CHECK(pooled_uniformity_pct({{9.0, 10.0, 11.0}, {1.0, 1.0, 1.0}}) == Approx(100.0 - 10.0 / std::sqrt(2.0)));
    CHECK_THROWS_AS(uniformity_pct({1.0}), std::invalid_argument);
    CHECK(linear_fit_r2({{0, 1}, {1, 3}, {2, 5}}) == Approx(1.0));
    CHECK(linear_fit_r2({{0, 1}, {1, 0}, {2, 1}, {3, 0}}) == Approx(0.2));
    CHECK_THROWS_AS(staircase_metrics({{0, 1}, {1, 2}}), std::invalid_argument);
}

TEST_CASE("staircase is linear across the conductance range", "[codec]") {
    const LevelCodec c;
    const auto p = ModelParams::calibrated();
    const auto rows = run_staircase(UnitState{}, c, p, 99);
    REQUIRE(rows.size() == 96);
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) pts.emplace_back(r.level, r.G_measured);
    CHECK(staircase_metrics(pts).r2 >= 0.98);
    CHECK(rows.front().G_measured == Approx(0.4e-9).epsilon(0.1));
    CHECK(rows.back().G_measured == Approx(7.3e-9).epsilon(0.1));
    CHECK(staircase_csv(rows).rfind("level,voltage_V,G_target_S,G_measured_S\n", 0) == 0);
}

TEST_CASE("uniformity studies are reproducible", "[codec]") {
    const auto p = ModelParams::calibrated();
    const auto stops = study_stop_voltages();
    REQUIRE(stops.size() == 10);
    CHECK(cycle_uniformity(p, stops, 3, 4) == cycle_uniformity(p, stops, 3, 4));
    auto quiet = p;
    quiet.sigma_c2c = 0.0;
    quiet.sigma_d2d = 0.0;
    CHECK(cycle_uniformity(quiet, stops, 3, 4) == Approx(100.0));
    CHECK(device_uniformity(quiet, stops, 5, 4) == Approx(100.0));
    CHECK_THROWS_AS(cycle_uniformity(p, stops, 1, 4), std::invalid_argument);
}
