#include <doctest.h>

#include <random>
#include <sstream>

#include <fmt/format.h>

#include "rainvsl/calibration.hpp"
#include "rainvsl/errors.hpp"

using namespace rainvsl;

namespace {

double fd_speed(double k, double vf, double kc, double a) { return vf * std::exp(-(1.0 / a) * std::pow(k / kc, a)); }

std::vector<std::pair<double, double>> fd_samples(double vf, double kc, double a, int n, double noise,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, noise);
  std::vector<std::pair<double, double>> out;
  for (int i = 0; i < n; ++i) {
    const double k = 2.0 + (3.0 * kc - 2.0) * i / (n - 1);
    double v = fd_speed(k, vf, kc, a);
    if (noise > 0.0) v *= 1.0 + eps(rng);
    out.emplace_back(k, v);
  }
  return out;
}

std::string rain_csv(const RainSpeedDensityParams& p) {
  std::string text = "timestamp,segment,lane,q,k,v,visibility\n";
  int row = 0;
  for (double k = 5; k <= 60; k += 5) {
    for (double lv : {0.05, 0.1, 0.2, 0.35, 0.5}) {
      const double v = p.a * std::exp(p.b * k + p.c * lv);
      text += fmt::format("t{},1,1,{:.17g},{:.17g},{:.17g},{:.17g}\n", row++, k * v, k, v, lv);
    }
  }
  return text;
}

}  // namespace

TEST_CASE("detector CSV parsing") {
  std::istringstream ok("timestamp,segment,lane,q,k,v\n\n2024-01-01T00:00,1,2,1200,20,60\n");
  const auto d = calibration::read_detector_csv(ok);
  REQUIRE(d.rows.size() == 1);
  CHECK(d.rows[0].segment == 1);
  CHECK(d.rows[0].lane == 2);
  CHECK(d.rows[0].speed_kmh == 60);
  CHECK_FALSE(d.has_visibility);

  std::istringstream header("time,segment,lane,q,k,v\n");
  try {
    calibration::read_detector_csv(header);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "header");
  }
  std::istringstream text("timestamp,segment,lane,q,k,v\nx,1,1,abc,2,3\n");
  CHECK_THROWS_AS(calibration::read_detector_csv(text), ValidationError);
  std::istringstream neg("timestamp,segment,lane,q,k,v\nx,1,1,5,-2,3\n");
  CHECK_THROWS_AS(calibration::read_detector_csv(neg), ValidationError);
  std::istringstream width("timestamp,segment,lane,q,k,v\nx,1,1,5\n");
  CHECK_THROWS_AS(calibration::read_detector_csv(width), ValidationError);
  CHECK_THROWS_AS(calibration::load_detector_csv("/nonexistent/detectors.csv"), IoError);
}

TEST_CASE("flags rows whose flow disagrees with k v") {
  std::istringstream in("timestamp,segment,lane,q,k,v\na,1,1,1200,20,60\nb,1,1,2000,20,60\nc,1,1,0,0,80\n");
  const auto d = calibration::read_detector_csv(in);
  CHECK(calibration::inconsistent_rows(d) == std::vector<std::size_t>{1});
}

TEST_CASE("fundamental diagram recovered from clean data") {
  const auto fit = calibration::fit_fundamental_diagram(fd_samples(105.7, 28.0, 2.0, 60, 0.0, 1));
  CHECK(fit.free_flow_speed_kmh == doctest::Approx(105.7).epsilon(1e-6));
  CHECK(fit.critical_density_vpkm == doctest::Approx(28.0).epsilon(1e-6));
  CHECK(fit.exponent == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(fit.rows_used == 60);
}

TEST_CASE("fundamental diagram within 2% under 1% noise") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto fit = calibration::fit_fundamental_diagram(fd_samples(120.6, 33.0, 1.8, 200, 0.01, seed));
    CHECK(fit.free_flow_speed_kmh == doctest::Approx(120.6).epsilon(0.02));
    CHECK(fit.critical_density_vpkm == doctest::Approx(33.0).epsilon(0.02));
    CHECK(fit.exponent == doctest::Approx(1.8).epsilon(0.02));
  }
  const auto a = calibration::fit_fundamental_diagram(fd_samples(120.6, 33.0, 1.8, 200, 0.01, 9));
  const auto b = calibration::fit_fundamental_diagram(fd_samples(120.6, 33.0, 1.8, 200, 0.01, 9));
  CHECK(a.free_flow_speed_kmh == b.free_flow_speed_kmh);
  CHECK(a.exponent == b.exponent);
}

TEST_CASE("fundamental diagram rejects thin or degenerate data") {
  CHECK_THROWS_AS(calibration::fit_fundamental_diagram(fd_samples(100, 30, 2, 10, 0, 1)), CalibrationError);
  std::vector<std::pair<double, double>> flat(40, {20.0, 70.0});
  CHECK_THROWS_AS(calibration::fit_fundamental_diagram(flat), CalibrationError);
}

TEST_CASE("per-lane fits from a dataset") {
  std::string text = "timestamp,segment,lane,q,k,v\n";
  for (int lane = 1; lane <= 2; ++lane) {
    const double vf = lane == 1 ? 110.0 : 90.0;
    for (const auto& [k, v] : fd_samples(vf, 30.0, 2.0, 40, 0.0, 1)) {
      text += fmt::format("t,2,{},{:.17g},{:.17g},{:.17g}\n", lane, k * v, k, v);
    }
  }
  std::istringstream in(text);
  const auto fits = calibration::fit_fundamental_diagrams(calibration::read_detector_csv(in));
  REQUIRE(fits.size() == 2);
  CHECK(fits[0].segment == 2);
  CHECK(fits[0].free_flow_speed_kmh == doctest::Approx(110.0).epsilon(1e-6));
  CHECK(fits[1].free_flow_speed_kmh == doctest::Approx(90.0).epsilon(1e-6));
  CHECK(calibration::fd_fragment(fits).find("free_flow_speed_kmh") != std::string::npos);
}

TEST_CASE("rain speed-density parameters recovered exactly") {
  const RainSpeedDensityParams truth{0.29, 0.17, -43.76};
  std::istringstream in(rain_csv(truth));
  const auto data = calibration::read_detector_csv(in);
  CHECK(data.has_visibility);
  const auto fit = calibration::fit_rain_speed_density(data);
  CHECK(std::abs(fit.params.a - truth.a) <= 1e-9 * std::abs(truth.a));
  CHECK(std::abs(fit.params.b - truth.b) <= 1e-9 * std::abs(truth.b));
  CHECK(std::abs(fit.params.c - truth.c) <= 1e-9 * std::abs(truth.c));
  CHECK(fit.residual_rms < 1e-10);
  const auto frag = calibration::rain_fragment(fit);
  CHECK(frag.find("rain_speed_density") != std::string::npos);
}

TEST_CASE("rain fit errors") {
  std::istringstream zero("timestamp,segment,lane,q,k,v,visibility\na,1,1,0,5,0,0.1\nb,1,1,1,6,1,0.2\n");
  try {
    calibration::fit_rain_speed_density(calibration::read_detector_csv(zero));
    FAIL("expected CalibrationError");
  } catch (const CalibrationError& e) {
    CHECK(std::string(e.what()).find("row 0") != std::string::npos);
  }
  std::istringstream rank(
      "timestamp,segment,lane,q,k,v,visibility\na,1,1,50,5,10,0.1\nb,1,1,60,6,10,0.1\nc,1,1,70,7,10,0.1\n");
  CHECK_THROWS_AS(calibration::fit_rain_speed_density(calibration::read_detector_csv(rank)), CalibrationError);
}
