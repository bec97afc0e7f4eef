#include <doctest.h>

#include <random>

#include "oracle_tables.hpp"
#include "rainvsl/errors.hpp"
#include "rainvsl/safety.hpp"
#include "rainvsl/units.hpp"
#include "support.hpp"

using namespace rainvsl;
using testing::rel_err;

TEST_CASE("water film depth matches the oracle table") {
  for (const auto& r : oracle::kWaterFilm) {
    CHECK(rel_err(safety::water_film_depth(r[0], r[1], r[2], r[3]), r[4]) < 1e-9);
  }
  CHECK(safety::water_film_depth(100, 2, 1, 0.8) == doctest::Approx(1.8948731459523128).epsilon(1e-12));
  CHECK(safety::water_film_depth(100, 2, 0, 0.8) == 0.0);
  CHECK_THROWS_AS(safety::water_film_depth(100, 0, 1, 0.8), DomainError);
  CHECK_THROWS_AS(safety::water_film_depth(100, 2, -1, 0.8), DomainError);
}

TEST_CASE("water film depth monotonicity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ul(20, 200), ui(0.5, 6), ud(0.01, 3), ut(0.2, 1.5);
  for (int n = 0; n < 5; ++n) {
    const double l = ul(rng), i = ui(rng), d = ud(rng), td = ut(rng);
    const double h = safety::water_film_depth(l, i, d, td);
    const double eps = 1e-6;
    CHECK(safety::water_film_depth(l, i, d + eps, td) > h);
    CHECK(safety::water_film_depth(l, i, d, td + eps) > h);
    CHECK(safety::water_film_depth(l, i + eps, d, td) < h);
  }
}

TEST_CASE("adhesion coefficient") {
  for (const auto& r : oracle::kAdhesion) {
    CHECK(rel_err(safety::adhesion_coefficient(r[0], r[1]), r[2]) < 1e-9);
  }
  CHECK(safety::adhesion_coefficient(200, 50) == 0.05);
  CHECK(safety::adhesion_coefficient(200, 50, 0.1) == 0.1);
  double prev = 1.0;
  for (double v = 0; v <= 200; v += 5) {
    const double phi = safety::adhesion_coefficient(v, 1.0);
    CHECK(phi <= prev);
    prev = phi;
  }
  prev = 1.0;
  for (double h = 0; h <= 40; h += 0.5) {
    const double phi = safety::adhesion_coefficient(60, h);
    CHECK(phi <= prev);
    prev = phi;
  }
}

TEST_CASE("ramp curve speed fit") {
  for (const auto& r : oracle::kCurveSpeed) {
    CHECK(rel_err(safety::ramp_curve_speed(r[0], r[1]), r[2]) < 1e-9);
  }
  CHECK(safety::ramp_curve_speed(1, 0.05) == 0.0);
}

TEST_CASE("ramp safe speed fixed point") {
  RampGeometry ramp = testing::fixture().ramp();
  ramp.legal_limit_kmh = 120;
  const double dry = safety::ramp_safe_speed(ramp, 0.0);
  CHECK(dry == doctest::Approx(49.5704550242978).epsilon(0.02 / 49.57));
  const double wet = safety::ramp_safe_speed(ramp, 6.0);
  CHECK(wet == doctest::Approx(49.4987518198062).epsilon(0.02 / 49.5));
  for (double d : {0.0, 0.5, 2.5, 6.0, 30.0}) {
    const double v = safety::ramp_safe_speed(ramp, d);
    const double h = safety::water_film_depth(ramp.slope_length_m, ramp.gradient_pct, mmh_to_mmmin(d),
                                              ramp.texture_depth_mm);
    CHECK(std::abs(v - safety::ramp_curve_speed(ramp.curve_radius_m, safety::adhesion_coefficient(v, h))) < 0.02);
  }
  ramp.legal_limit_kmh = 40;
  CHECK(safety::ramp_safe_speed(ramp, 1.0) == 40.0);
}

TEST_CASE("visibility") {
  for (const auto& r : oracle::kVisibility) {
    CHECK(rel_err(safety::visibility(r[0]), r[1]) < 1e-9);
  }
  CHECK(safety::visibility(0.0) == 10000.0);
  CHECK(safety::visibility(0.001) == 10000.0);
  CHECK(safety::visibility(0.0, 800.0) == 800.0);
}

TEST_CASE("stopping-distance speed") {
  for (const auto& r : oracle::kStoppingRoot) {
    const double v = safety::mainline_safe_speed(r[0], r[1], r[2], r[3]);
    CHECK(rel_err(kmh_to_ms(v), r[4]) < 1e-9);
  }
  for (double phi : {0.1, 0.4, 0.8}) {
    for (double lv : {20.0, 120.0, 2000.0}) {
      const double v = kmh_to_ms(safety::mainline_safe_speed(phi, 1.5, lv, 5.0));
      const double distance = v * v / (2 * kGravity * phi) + v * 1.5 + 5.0;
      CHECK(std::abs(distance - lv) < 1e-6);
    }
  }
  CHECK(safety::mainline_safe_speed(0.5, 1.0, 4.0, 5.0) == 0.0);
  CHECK_THROWS_AS(safety::mainline_safe_speed(0.0, 1.0, 100, 5), DomainError);
}

TEST_CASE("sight-limited speed is self-consistent") {
  const double h = 0.3;
  const double v = safety::sight_limited_speed(h, 1.0, 41.0, 5.0, 200.0);
  const double back = safety::mainline_safe_speed(safety::adhesion_coefficient(v, h), 1.0, 41.0, 5.0);
  CHECK(std::abs(v - back) < 1e-6);
  CHECK(safety::sight_limited_speed(0.0, 1.0, 10000.0, 5.0, 120.0) == 120.0);
}

TEST_CASE("envelope follows the rainfall") {
  const auto& cfg = testing::fixture();
  const auto dry = build_envelope(cfg, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(dry.max_safe_speed_kmh[i] == cfg.segments[i].legal_limit_kmh);
    CHECK(dry.film_depth_mm[i] == 0.0);
  }
  CHECK(dry.ramp_safe_speed_kmh == doctest::Approx(49.57).epsilon(0.001));
  CHECK(dry.max_deceleration_ms2 > 0.0);
  CHECK(dry.max_deceleration_ms2 <= cfg.safety.max_deceleration_ms2);

  SafetyEnvelope prev = dry;
  for (double t : {900.0, 1800.0, 2700.0}) {
    const auto env = build_envelope(cfg, t);
    for (std::size_t i = 0; i < 4; ++i) CHECK(env.max_safe_speed_kmh[i] <= prev.max_safe_speed_kmh[i]);
    CHECK(env.ramp_safe_speed_kmh <= prev.ramp_safe_speed_kmh + 1e-9);
    prev = env;
  }
  const auto a = build_envelope(cfg, 2700.0);
  const auto b = build_envelope(cfg, 2700.0);
  CHECK(a.max_safe_speed_kmh == b.max_safe_speed_kmh);
  CHECK(a.ramp_safe_speed_kmh == b.ramp_safe_speed_kmh);
  CHECK_THROWS_AS(build_envelope_for_rain(cfg, {1.0}), DomainError);
}
