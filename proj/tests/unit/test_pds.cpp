#include <doctest.h>

#include <sstream>

#include "oracle_tables.hpp"
#include "rainvsl/errors.hpp"
#include "rainvsl/pds.hpp"
#include "rainvsl/units.hpp"
#include "support.hpp"

using namespace rainvsl;
using testing::rel_err;

TEST_CASE("deceleration-zone length") {
  for (const auto& r : oracle::kPdsLength) {
    CHECK(rel_err(pds::pds_length(r[0], r[1], r[2]), r[3]) < 1e-9);
  }
  CHECK(pds::pds_length(80, 50, 1) == doctest::Approx(150.46296296296296).epsilon(1e-14));
  CHECK(pds::pds_length(80, 40, 2) == doctest::Approx(92.592592592592593).epsilon(1e-14));
  CHECK(pds::pds_length(60, 60, 1) == 0.0);
  CHECK_THROWS_AS(pds::pds_length(50, 60, 1), DomainError);
  CHECK_THROWS_AS(pds::pds_length(80, 50, 0), DomainError);
  CHECK_THROWS_AS(pds::pds_length(80, -1, 1), DomainError);
}

TEST_CASE("guidance profile") {
  for (const auto& r : oracle::kPdsProfile) {
    const PdsProfile p{1e6, r[2], r[1], 200.0};
    CHECK(rel_err(pds::pds_guidance_speed(r[0], p), r[3]) < 1e-9);
  }
  const double ld = pds::pds_length(80, 50, 1);
  const PdsProfile p{ld, 1.0, 50, 80};
  CHECK(pds::pds_guidance_speed(75.23, p) == doctest::Approx(66.70803249984218).epsilon(1e-12));
  CHECK(pds::pds_guidance_speed(0.0, p) == 50.0);
  CHECK(pds::pds_guidance_speed(ld, p) == 80.0);
  CHECK(pds::pds_guidance_speed(-5.0, p) == 50.0);
  CHECK(pds::pds_guidance_speed(ld + 100, p) == 80.0);
}

TEST_CASE("profile is continuous and non-decreasing") {
  const PdsProfile p{pds::pds_length(75, 49.5, 0.75), 0.75, 49.5, 75};
  double prev = pds::pds_guidance_speed(0.0, p);
  for (double s = 0.01; s <= p.length_m + 20; s += 0.01) {
    const double v = pds::pds_guidance_speed(s, p);
    CHECK(v >= prev);
    CHECK(v - prev < 0.05);
    prev = v;
  }
  CHECK(std::abs(pds::pds_guidance_speed(p.length_m - 1e-9, p) - 75.0) < 1e-6);
}

TEST_CASE("exact follower decelerates at a_o") {
  const double a = 0.5;
  const PdsProfile p{pds::pds_length(90, 40, a), a, 40, 90};
  // March toward the gore with the speed read from the profile.
  const double dt = 1e-3;
  double s = p.length_m;
  double t = 0;
  std::vector<std::pair<double, double>> trace;
  while (s > 1.0) {
    const double v = kmh_to_ms(pds::pds_guidance_speed(s, p));
    trace.emplace_back(t, v);
    const double vm = kmh_to_ms(pds::pds_guidance_speed(s - 0.5 * v * dt, p));
    s -= vm * dt;
    t += dt;
  }
  for (std::size_t k = 100; k + 100 < trace.size(); k += 500) {
    const double dvdt = (trace[k + 100].second - trace[k - 100].second) / (trace[k + 100].first - trace[k - 100].first);
    CHECK(std::abs(dvdt + a) < 1e-3 * a);
  }
}

TEST_CASE("lower deceleration lengthens the zone") {
  double prev = 0.0;
  for (double a : {2.0, 1.5, 1.0, 0.75, 0.5, 0.25}) {
    const double ld = pds::pds_length(75, 49.5, a);
    CHECK(ld > prev);
    prev = ld;
  }
}

TEST_CASE("sizing against the envelope") {
  SafetyEnvelope env;
  env.ramp_safe_speed_kmh = 49.5;
  const auto p = pds::size_pds(env, 75, 0.25);
  CHECK(p.active());
  CHECK(p.length_m == doctest::Approx(pds::pds_length(75, 49.5, 0.25)));
  const auto idle = pds::size_pds(env, 40, 0.25);
  CHECK_FALSE(idle.active());
  CHECK(pds::pds_guidance_speed(0.0, idle) == 40.0);
}

TEST_CASE("mean guidance over a span") {
  const PdsProfile p{pds::pds_length(80, 50, 1), 1.0, 50, 80};
  double sum = 0.0;
  const int n = 200000;
  const double span = 500.0;
  for (int k = 0; k < n; ++k) sum += pds::pds_guidance_speed((k + 0.5) * span / n, p);
  CHECK(pds::mean_guidance_speed(p, span) == doctest::Approx(sum / n).epsilon(1e-8));
  const PdsProfile flat{0.0, 1.0, 80, 80};
  CHECK(pds::mean_guidance_speed(flat, span) == 80.0);
}

TEST_CASE("profile CSV") {
  const PdsProfile p{25.0, 1.0, 50, 53.2};
  std::ostringstream out;
  pds::write_profile_csv(out, p);
  const auto text = out.str();
  CHECK(text.rfind("s,v_g\n0,50\n", 0) == 0);
  CHECK(text.find("\n25,53.2\n") != std::string::npos);
}
