#pragma once

#include <cmath>
#include <string>

#include "rainvsl/scenario.hpp"

namespace testing {

inline const rainvsl::ScenarioConfig& fixture() {
  static const rainvsl::ScenarioConfig cfg = rainvsl::load_scenario(RAINVSL_FIXTURE);
  return cfg;
}

inline double rel_err(double got, double want) {
  const double scale = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / scale;
}

/// Identical segments, dry, no ramp flow; handy for fixed-point checks.
inline rainvsl::ScenarioConfig uniform_corridor(std::size_t segments = 4) {
  rainvsl::ScenarioConfig cfg = fixture();
  const auto proto = cfg.segments.back();
  cfg.segments.assign(segments, proto);
  for (std::size_t i = 0; i < segments; ++i) {
    cfg.segments[i].id = static_cast<int>(i + 1);
    if (i + 1 < segments) cfg.segments[i].ramp.reset();
  }
  for (auto& iv : cfg.rainfall.intervals) iv.intensity_mmh.assign(segments, 0.0);
  return cfg;
}

}  // namespace testing
