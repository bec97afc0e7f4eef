#pragma once

#include <vector>

#include "rainvsl/domain.hpp"

namespace rainvsl {

/// Rain-dependent speed and deceleration bounds at one instant.
struct SafetyEnvelope {
  double time_s = 0.0;
  std::vector<double> rain_mmh;            // per segment
  std::vector<double> film_depth_mm;       // main-line water film
  std::vector<double> adhesion;            // phi at the segment's safe speed
  std::vector<double> visibility_m;
  std::vector<double> max_safe_speed_kmh;  // V_max, already capped at the legal limit
  double ramp_film_depth_mm = 0.0;
  double ramp_adhesion = 0.0;
  double ramp_safe_speed_kmh = 0.0;        // V_r
  double max_deceleration_ms2 = 0.0;       // a_max

  std::size_t segments() const noexcept { return max_safe_speed_kmh.size(); }
};

namespace safety {

inline constexpr double kAdhesionIntercept = 0.8256;
inline constexpr double kDefaultAdhesionFloor = 0.05;
inline constexpr double kDefaultClearVisibility = 10000.0;

/// Water-film depth (mm) on a drained pavement:
///   h = 0.1258 l^0.6715 i^-0.3147 d^0.7786 TD^0.7261
/// with slope length l (m), gradient i (%), rainfall d (mm/min), texture depth TD (mm).
/// Throws DomainError for non-positive l, i, TD or negative d.
double water_film_depth(double slope_length_m, double gradient_pct, double rain_mm_per_min, double texture_depth_mm);

/// Tyre-pavement adhesion phi = 0.8256 - 0.0043 v - 0.0072 h, floored at `floor`.
double adhesion_coefficient(double speed_kmh, double film_depth_mm, double floor = kDefaultAdhesionFloor);

/// Fitted critical cornering speed (km/h) on a ramp curve of radius R (m),
/// clamped below at zero.
double ramp_curve_speed(double radius_m, double adhesion);

/// Speed v* at which the curve-speed fit and the speed-dependent adhesion agree,
/// capped at the ramp's legal limit. Damped fixed-point iteration (factor 0.5)
/// from the legal limit until successive iterates differ by < 0.01 km/h.
double ramp_safe_speed(const RampGeometry& ramp, double rain_mmh, double adhesion_floor = kDefaultAdhesionFloor);

/// Visibility L_v = 294.8 d^-1.1 (m), capped at the clear-weather value; d = 0 gives the cap.
double visibility(double rain, double clear_visibility_m = kDefaultClearVisibility);

/// Largest speed (km/h) that can stop within the visible distance:
/// positive root of v^2/(2 g phi) + v t_r + l_s = L_v, g = 9.8. Zero if L_v <= l_s.
double mainline_safe_speed(double adhesion, double reaction_time_s, double visibility_m, double safety_gap_m);

/// Closed-form main-line limit as printed alongside the derivation. Diagnostic only.
/// Throws NumericError (with the radicand value) when the square root is undefined.
double mainline_safe_speed_closed_form(double film_depth_mm, double rain);

/// Stopping-sight speed with adhesion evaluated at the speed itself:
/// v* = min(cap, mainline_safe_speed(phi(v*, h), ...)), solved by bisection.
double sight_limited_speed(double film_depth_mm, double reaction_time_s, double visibility_m, double safety_gap_m,
                           double cap_kmh, double adhesion_floor = kDefaultAdhesionFloor);

}  // namespace safety

/// Envelope for every segment at time t (rainfall looked up from the schedule).
SafetyEnvelope build_envelope(const ScenarioConfig& cfg, double t);

/// Envelope for an explicit per-segment rainfall vector (mm/h).
SafetyEnvelope build_envelope_for_rain(const ScenarioConfig& cfg, const std::vector<double>& rain_mmh,
                                       double t = 0.0);

}  // namespace rainvsl
