#pragma once

#include <iosfwd>

#include "rainvsl/safety.hpp"

namespace rainvsl {

/// Deceleration profile in the rightmost lane upstream of the gore.
/// Positions are distances remaining to the gore (m).
struct PdsProfile {
  double length_m = 0.0;
  double deceleration_ms2 = 0.0;
  double ramp_speed_kmh = 0.0;   // V_r, speed at the gore
  double entry_speed_kmh = 0.0;  // V_j3, speed where deceleration starts

  bool active() const noexcept { return length_m > 0.0; }

  friend bool operator==(const PdsProfile&, const PdsProfile&) = default;
};

namespace pds {

/// l_d = (V_j3^2 - V_r^2) / (2 a_o), speeds in m/s.
/// Throws DomainError when V_r > V_j3, a_o <= 0 or V_r < 0.
double pds_length(double entry_speed_kmh, double ramp_speed_kmh, double deceleration_ms2);

/// sqrt(V_r^2 + 2 a_o s) in km/h, capped at V_j3. Exactly V_j3 for s >= l_d.
double pds_guidance_speed(double distance_to_gore_m, const PdsProfile& profile);

/// Profile for the envelope's V_r at deceleration a_o. When V_j3 < V_r the
/// profile is the identity (l_d = 0, no deceleration).
PdsProfile size_pds(const SafetyEnvelope& env, double entry_speed_kmh, double deceleration_ms2);

/// Length-averaged guidance speed over the last `span_m` metres before the gore.
double mean_guidance_speed(const PdsProfile& profile, double span_m);

/// Rows `s,v_g` every `spacing_m` from the gore to l_d (inclusive).
void write_profile_csv(std::ostream& out, const PdsProfile& profile, double spacing_m = 10.0);

}  // namespace pds
}  // namespace rainvsl
