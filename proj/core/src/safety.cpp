#include "rainvsl/safety.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "rainvsl/errors.hpp"
#include "rainvsl/units.hpp"

namespace rainvsl {
namespace safety {

double water_film_depth(double slope_length_m, double gradient_pct, double rain_mm_per_min, double texture_depth_mm) {
  if (!(slope_length_m > 0.0)) throw DomainError("water_film_depth: slope length must be > 0");
  if (!(gradient_pct > 0.0)) throw DomainError("water_film_depth: gradient must be > 0");
  if (!(texture_depth_mm > 0.0)) throw DomainError("water_film_depth: texture depth must be > 0");
  if (!(rain_mm_per_min >= 0.0)) throw DomainError("water_film_depth: rainfall must be >= 0");
  if (rain_mm_per_min == 0.0) return 0.0;
  return 0.1258 * std::pow(slope_length_m, 0.6715) * std::pow(gradient_pct, -0.3147) *
         std::pow(rain_mm_per_min, 0.7786) * std::pow(texture_depth_mm, 0.7261);
}

double adhesion_coefficient(double speed_kmh, double film_depth_mm, double floor) {
  const double phi = kAdhesionIntercept - 0.0043 * speed_kmh - 0.0072 * film_depth_mm;
  if (phi < floor) {
    spdlog::debug("adhesion clamp: v={} h={} phi={} -> {}", speed_kmh, film_depth_mm, phi, floor);
    return floor;
  }
  return phi;
}

double ramp_curve_speed(double radius_m, double adhesion) {
  const double r = radius_m;
  const double p = adhesion;
  const double v = 0.782 * r + (68.457 + 0.247 * r) * p - 0.00335 * r * r - 32.171 * p * p - 5.272;
  if (v < 0.0) {
    spdlog::debug("ramp curve speed clamp: R={} phi={} v={} -> 0", radius_m, adhesion, v);
    return 0.0;
  }
  return v;
}

double ramp_safe_speed(const RampGeometry& ramp, double rain_mmh, double adhesion_floor) {
  if (!(rain_mmh >= 0.0)) throw DomainError("ramp_safe_speed: rainfall must be >= 0");
  const double film =
      water_film_depth(ramp.slope_length_m, ramp.gradient_pct, mmh_to_mmmin(rain_mmh), ramp.texture_depth_mm);

  constexpr int kMaxIterations = 200;
  constexpr double kTolerance = 0.01;
  constexpr double kDamping = 0.5;

  double prev = ramp.legal_limit_kmh;
  double v = prev;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double target = ramp_curve_speed(ramp.curve_radius_m, adhesion_coefficient(v, film, adhesion_floor));
    prev = v;
    v = v + kDamping * (target - v);
    if (std::abs(v - prev) < kTolerance) {
      if (v > ramp.legal_limit_kmh) {
        spdlog::debug("ramp safe speed capped at legal limit {} (fixed point {})", ramp.legal_limit_kmh, v);
        return ramp.legal_limit_kmh;
      }
      return v;
    }
  }
  throw NumericError("ramp_safe_speed: no convergence after 200 iterations (last iterates " + std::to_string(prev) +
                     ", " + std::to_string(v) + ")");
}

double visibility(double rain, double clear_visibility_m) {
  if (!(rain > 0.0)) return clear_visibility_m;
  const double lv = 294.8 * std::pow(rain, -1.1);
  if (lv > clear_visibility_m) {
    spdlog::debug("visibility clamp: d={} L_v={} -> {}", rain, lv, clear_visibility_m);
    return clear_visibility_m;
  }
  return lv;
}

double mainline_safe_speed(double adhesion, double reaction_time_s, double visibility_m, double safety_gap_m) {
  if (!(adhesion > 0.0)) throw DomainError("mainline_safe_speed: adhesion must be > 0");
  if (!(reaction_time_s >= 0.0)) throw DomainError("mainline_safe_speed: reaction time must be >= 0");
  const double room = visibility_m - safety_gap_m;
  if (!(room > 0.0)) return 0.0;
  const double gp = kGravity * adhesion;
  const double b = gp * reaction_time_s;
  // Rationalized root avoids cancellation when b is large relative to the room.
  const double v_ms = 2.0 * gp * room / (b + std::sqrt(b * b + 2.0 * gp * room));
  return ms_to_kmh(v_ms);
}

double mainline_safe_speed_closed_form(double film_depth_mm, double rain) {
  if (!(rain > 0.0)) throw DomainError("mainline_safe_speed_closed_form: rainfall must be > 0");
  const double h = film_depth_mm;
  const double dp = std::pow(rain, -1.1);
  const double lead = 0.224 * h - 0.804 * dp - 25.63;
  const double inner = 0.353 * h - 1.268 * dp - 40.43;
  const double radicand = inner * inner - 3.156 * (294.8 * dp - 5.0) * (0.0072 * h - 0.826);
  if (radicand < 0.0) {
    throw NumericError("mainline_safe_speed_closed_form: negative radicand " + std::to_string(radicand));
  }
  return lead + 0.634 * std::sqrt(radicand);
}

double sight_limited_speed(double film_depth_mm, double reaction_time_s, double visibility_m, double safety_gap_m,
                           double cap_kmh, double adhesion_floor) {
  auto reachable = [&](double v) {
    return mainline_safe_speed(adhesion_coefficient(v, film_depth_mm, adhesion_floor), reaction_time_s,
                               visibility_m, safety_gap_m);
  };
  // reachable() is non-increasing in v, so v - reachable(v) has a single sign change.
  if (reachable(cap_kmh) >= cap_kmh) return cap_kmh;
  double lo = 0.0;
  double hi = cap_kmh;
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (reachable(mid) >= mid) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace safety

SafetyEnvelope build_envelope_for_rain(const ScenarioConfig& cfg, const std::vector<double>& rain_mmh, double t) {
  if (rain_mmh.size() != cfg.segments.size()) {
    throw DomainError("build_envelope: rainfall vector does not match the segment count");
  }
  const auto& sp = cfg.safety;
  const auto& pv = cfg.pavement;

  SafetyEnvelope env;
  env.time_s = t;
  env.rain_mmh = rain_mmh;
  const std::size_t m = cfg.segments.size();
  env.film_depth_mm.resize(m);
  env.adhesion.resize(m);
  env.visibility_m.resize(m);
  env.max_safe_speed_kmh.resize(m);

  for (std::size_t i = 0; i < m; ++i) {
    const double d = rain_mmh[i];
    const double film =
        safety::water_film_depth(pv.slope_length_m, pv.gradient_pct, mmh_to_mmmin(d), pv.texture_depth_mm);
    const double lv = safety::visibility(d, sp.clear_visibility_m);
    const double vmax = safety::sight_limited_speed(film, sp.reaction_time_s, lv, sp.safety_gap_m,
                                                    cfg.segments[i].legal_limit_kmh, sp.adhesion_floor);
    env.film_depth_mm[i] = film;
    env.visibility_m[i] = lv;
    env.max_safe_speed_kmh[i] = vmax;
    env.adhesion[i] = safety::adhesion_coefficient(vmax, film, sp.adhesion_floor);
  }

  const std::size_t r = cfg.ramp_segment();
  const auto& ramp = *cfg.segments[r].ramp;
  env.ramp_film_depth_mm =
      safety::water_film_depth(ramp.slope_length_m, ramp.gradient_pct, mmh_to_mmmin(rain_mmh[r]), ramp.texture_depth_mm);
  env.ramp_safe_speed_kmh = safety::ramp_safe_speed(ramp, rain_mmh[r], sp.adhesion_floor);
  env.ramp_adhesion = safety::adhesion_coefficient(env.ramp_safe_speed_kmh, env.ramp_film_depth_mm, sp.adhesion_floor);
  env.max_deceleration_ms2 = std::min(sp.max_deceleration_ms2, kGravity * env.adhesion[r]);
  return env;
}

SafetyEnvelope build_envelope(const ScenarioConfig& cfg, double t) {
  if (t < 0.0 || t >= cfg.time.horizon_s) {
    throw RangeError("build_envelope: t = " + std::to_string(t) + " s outside the horizon");
  }
  std::vector<double> rain(cfg.segments.size());
  for (std::size_t i = 0; i < rain.size(); ++i) rain[i] = rainfall_at(cfg.rainfall, i, t);
  return build_envelope_for_rain(cfg, rain, t);
}

}  // namespace rainvsl
