#include <doctest.h>

#include <random>

#include "rainvsl/units.hpp"

using namespace rainvsl;

TEST_CASE("km/h and m/s round trip") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 250.0);
  for (int n = 0; n < 1000; ++n) {
    const double v = u(rng);
    CHECK(std::abs(ms_to_kmh(kmh_to_ms(v)) - v) <= 1e-12 * std::max(v, 1.0));
    CHECK(std::abs(kmh_to_ms(ms_to_kmh(v)) - v) <= 1e-12 * std::max(v, 1.0));
  }
  CHECK(kmh_to_ms(36.0) == doctest::Approx(10.0));
}

TEST_CASE("length, time and rainfall conversions") {
  CHECK(m_to_km(500.0) == 0.5);
  CHECK(km_to_m(0.5) == 500.0);
  CHECK(s_to_h(20.0) == doctest::Approx(1.0 / 180.0));
  CHECK(h_to_s(s_to_h(300.0)) == doctest::Approx(300.0));
  CHECK(mmh_to_mmmin(6.0) == doctest::Approx(0.1));
  CHECK(mmmin_to_mmh(0.1) == doctest::Approx(6.0));
}
