#include "rainvsl/pds.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "rainvsl/errors.hpp"
#include "rainvsl/units.hpp"

namespace rainvsl::pds {

double pds_length(double entry_speed_kmh, double ramp_speed_kmh, double deceleration_ms2) {
  if (!(deceleration_ms2 > 0.0)) throw DomainError("pds_length: deceleration must be > 0");
  if (!(ramp_speed_kmh >= 0.0)) throw DomainError("pds_length: ramp speed must be >= 0");
  if (ramp_speed_kmh > entry_speed_kmh) throw DomainError("pds_length: no deceleration needed (V_r > V_j3)");
  const double vj = kmh_to_ms(entry_speed_kmh);
  const double vr = kmh_to_ms(ramp_speed_kmh);
  return (vj * vj - vr * vr) / (2.0 * deceleration_ms2);
}

double pds_guidance_speed(double distance_to_gore_m, const PdsProfile& profile) {
  const double s = std::max(0.0, distance_to_gore_m);
  if (s >= profile.length_m) return profile.entry_speed_kmh;
  const double vr = kmh_to_ms(profile.ramp_speed_kmh);
  const double v = ms_to_kmh(std::sqrt(vr * vr + 2.0 * profile.deceleration_ms2 * s));
  return std::min(v, profile.entry_speed_kmh);
}

PdsProfile size_pds(const SafetyEnvelope& env, double entry_speed_kmh, double deceleration_ms2) {
  PdsProfile p;
  p.deceleration_ms2 = deceleration_ms2;
  p.entry_speed_kmh = entry_speed_kmh;
  if (entry_speed_kmh < env.ramp_safe_speed_kmh) {
    p.ramp_speed_kmh = entry_speed_kmh;
    return p;
  }
  p.ramp_speed_kmh = env.ramp_safe_speed_kmh;
  p.length_m = pds_length(entry_speed_kmh, env.ramp_safe_speed_kmh, deceleration_ms2);
  return p;
}

double mean_guidance_speed(const PdsProfile& profile, double span_m) {
  if (!(span_m > 0.0)) throw DomainError("mean_guidance_speed: span must be > 0");
  const double ld = std::min(profile.length_m, span_m);
  if (!(ld > 0.0)) return profile.entry_speed_kmh;
  const double a = profile.deceleration_ms2;
  const double vr = kmh_to_ms(profile.ramp_speed_kmh);
  const double vl = std::sqrt(vr * vr + 2.0 * a * ld);
  // Integral of sqrt(vr^2 + 2 a s) over [0, ld].
  const double inside = (vl * vl * vl - vr * vr * vr) / (3.0 * a);
  const double outside = kmh_to_ms(profile.entry_speed_kmh) * (span_m - ld);
  return ms_to_kmh((inside + outside) / span_m);
}

void write_profile_csv(std::ostream& out, const PdsProfile& profile, double spacing_m) {
  if (!(spacing_m > 0.0)) throw DomainError("write_profile_csv: spacing must be > 0");
  out << "s,v_g\n";
  const auto n = static_cast<long>(std::floor(profile.length_m / spacing_m));
  for (long k = 0; k <= n; ++k) {
    const double s = static_cast<double>(k) * spacing_m;
    out << fmt::format("{},{}\n", s, pds_guidance_speed(s, profile));
  }
  if (profile.length_m > static_cast<double>(n) * spacing_m) {
    out << fmt::format("{},{}\n", profile.length_m, profile.entry_speed_kmh);
  }
}

}  // namespace rainvsl::pds
