#pragma once

// Macroscopic quantities travel in km, h, km/h, veh/km and veh/h.
// Microsimulation and road-weather physics work in SI (m, s, m/s, m/s^2).
// Conversions between the two systems happen only through these helpers.

namespace rainvsl {

/// Gravitational acceleration exactly as printed in the stopping-distance term.
inline constexpr double kGravity = 9.8;

inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kMetersPerKm = 1000.0;
inline constexpr double kKmhPerMs = 3.6;

constexpr double kmh_to_ms(double kmh) noexcept { return kmh / kKmhPerMs; }
constexpr double ms_to_kmh(double ms) noexcept { return ms * kKmhPerMs; }
constexpr double m_to_km(double m) noexcept { return m / kMetersPerKm; }
constexpr double km_to_m(double km) noexcept { return km * kMetersPerKm; }
constexpr double s_to_h(double s) noexcept { return s / kSecondsPerHour; }
constexpr double h_to_s(double h) noexcept { return h * kSecondsPerHour; }

/// Rainfall intensity is stored in mm/h; the water-film fit wants mm/min.
constexpr double mmh_to_mmmin(double mmh) noexcept { return mmh / 60.0; }
constexpr double mmmin_to_mmh(double mmmin) noexcept { return mmmin * 60.0; }

}  // namespace rainvsl
