#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rainvsl {

struct LaneParams {
  double free_flow_speed_kmh = 0.0;
  double critical_density_vpkm = 0.0;
  double capacity_vph = 0.0;

  friend bool operator==(const LaneParams&, const LaneParams&) = default;
};

/// Off-ramp alignment and drainage. Superelevation is kept for the record;
/// the fitted curve-speed surface does not use it.
struct RampGeometry {
  double curve_radius_m = 0.0;
  double slope_length_m = 0.0;
  double gradient_pct = 0.0;
  double texture_depth_mm = 0.0;
  double superelevation_deg = 0.0;
  double legal_limit_kmh = 0.0;

  friend bool operator==(const RampGeometry&, const RampGeometry&) = default;
};

/// Drainage parameters of the main-line pavement (water-film model inputs).
struct PavementDrainage {
  double slope_length_m = 0.0;
  double gradient_pct = 0.0;
  double texture_depth_mm = 0.0;

  friend bool operator==(const PavementDrainage&, const PavementDrainage&) = default;
};

struct SegmentGeometry {
  int id = 0;
  double length_m = 0.0;
  double legal_limit_kmh = 0.0;
  std::vector<LaneParams> lanes;
  std::optional<RampGeometry> ramp;

  bool has_off_ramp() const noexcept { return ramp.has_value(); }
  std::size_t lane_count() const noexcept { return lanes.size(); }
  double length_km() const noexcept { return length_m / 1000.0; }

  friend bool operator==(const SegmentGeometry&, const SegmentGeometry&) = default;
};

/// One half-open interval [start_s, end_s) with an intensity per segment, in mm/h.
struct RainInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<double> intensity_mmh;

  friend bool operator==(const RainInterval&, const RainInterval&) = default;
};

/// Piecewise-constant rainfall. Intervals are sorted, contiguous and cover
/// [0, horizon) once validated.
struct RainfallSchedule {
  std::vector<RainInterval> intervals;

  friend bool operator==(const RainfallSchedule&, const RainfallSchedule&) = default;
};

/// Rainfall intensity (mm/h) for `segment` at time `t`.
/// Throws RangeError outside the covered horizon or for an unknown segment.
double rainfall_at(const RainfallSchedule& schedule, std::size_t segment, double t);

struct TimeGrid {
  double sim_step_s = 1.0;
  double prediction_step_s = 20.0;
  double control_period_s = 300.0;
  double horizon_s = 3600.0;

  /// Prediction steps per control period (n_T).
  int steps_per_cycle() const;
  int cycles() const;
  int sim_steps_per_cycle() const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

struct Demand {
  std::vector<double> inflow_vph;  // per lane, at the upstream boundary
  double exit_fraction = 0.0;      // share of rightmost-lane arrivals bound for the ramp

  friend bool operator==(const Demand&, const Demand&) = default;
};

enum class RainCapModel {
  none,           // rain term omitted
  speed_density,  // exponential speed-density fit on visibility
  sight_distance, // envelope's visibility-limited safe speed
};

struct MetanetParams {
  double tau_s = 73.2;
  double kappa_vpkm = 42.0;
  double omega = 0.16;
  double fd_exponent = 2.0;       // exponent of the guided speed-density sensitivity
  double rain_exponent = 2.0;     // exponent of the rain-modified desired speed
  double guided_critical_density_vpkm = 30.0;
  double gamma_margin = 0.0;      // prediction slack on guidance
  RainCapModel rain_cap = RainCapModel::sight_distance;
  double rain_cap_max_kmh = 200.0;

  friend bool operator==(const MetanetParams&, const MetanetParams&) = default;
};

struct RainSpeedDensityParams {
  double a = 0.29;
  double b = 0.17;      // per veh/km
  double c = -43.76;    // per metre of visibility

  friend bool operator==(const RainSpeedDensityParams&, const RainSpeedDensityParams&) = default;
};

struct ObjectiveWeights {
  double ttt = 3.0;
  double ttd = 2.0;
  double sd = 5.0;

  friend bool operator==(const ObjectiveWeights&, const ObjectiveWeights&) = default;
};

struct SafetyParams {
  double reaction_time_s = 1.5;
  double safety_gap_m = 5.0;
  double max_deceleration_ms2 = 1.0;
  double adhesion_floor = 0.05;
  double clear_visibility_m = 10000.0;

  friend bool operator==(const SafetyParams&, const SafetyParams&) = default;
};

struct ControlParams {
  double compliance = 1.0;            // share of drivers that follow guidance
  double speed_step_kmh = 5.0;
  double min_guidance_kmh = 20.0;
  double deceleration_step_ms2 = 0.25;
  double adjacent_band_kmh = 20.0;    // between neighbouring segments
  double cycle_band_kmh = 20.0;       // between consecutive control cycles
  int max_passes = 50;

  friend bool operator==(const ControlParams&, const ControlParams&) = default;
};

struct MicrosimParams {
  double cell_m = 0.5;
  int vehicle_cells = 9;
  double p_slow = 0.25;
  double exit_speed_tolerance_kmh = 5.0;
  bool lane_changes = true;
  std::vector<double> station_offsets_m{0.0, 100.0, 200.0, 300.0, 400.0};

  friend bool operator==(const MicrosimParams&, const MicrosimParams&) = default;
};

struct ScenarioConfig {
  std::string name;
  std::vector<SegmentGeometry> segments;
  PavementDrainage pavement;
  RainfallSchedule rainfall;
  TimeGrid time;
  Demand demand;
  MetanetParams metanet;
  RainSpeedDensityParams rain_speed_density;
  ObjectiveWeights weights;
  SafetyParams safety;
  ControlParams control;
  MicrosimParams microsim;
  std::uint64_t seed = 1;

  std::size_t lane_count() const noexcept {
    return segments.empty() ? 0 : segments.front().lane_count();
  }
  /// Index of the (single) segment carrying the off-ramp.
  std::size_t ramp_segment() const;
  const RampGeometry& ramp() const;
  double road_length_m() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

}  // namespace rainvsl
