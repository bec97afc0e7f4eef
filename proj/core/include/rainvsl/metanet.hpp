#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "rainvsl/domain.hpp"
#include "rainvsl/lane_grid.hpp"
#include "rainvsl/safety.hpp"

namespace rainvsl {

/// Macroscopic state of every (segment, lane) cell at prediction step `step`.
/// Flow is always derived as density * speed.
struct LaneSegmentState {
  LaneGrid<double> density_vpkm;
  LaneGrid<double> speed_kmh;
  int step = 0;

  LaneSegmentState() = default;
  LaneSegmentState(std::size_t segments, std::size_t lanes)
      : density_vpkm(segments, lanes), speed_kmh(segments, lanes) {}

  std::size_t segments() const noexcept { return density_vpkm.segments(); }
  std::size_t lanes() const noexcept { return density_vpkm.lanes(); }
  double flow_vph(std::size_t i, std::size_t j) const { return density_vpkm(i, j) * speed_kmh(i, j); }

  friend bool operator==(const LaneSegmentState&, const LaneSegmentState&) = default;
};

/// Guidance speed per cell (km/h); std::nullopt means no guidance anywhere.
using GuidanceField = std::optional<LaneGrid<double>>;

struct BoundaryConditions {
  std::vector<double> inflow_vph;               // per lane into segment 0
  std::vector<double> upstream_speed_kmh;       // empty: mirror segment 0
  std::vector<double> downstream_density_vpkm;  // empty: mirror the last segment
  LaneGrid<double> ramp_flow_vph;               // explicit r; empty grid means zero
  double exit_fraction = 0.0;                   // adds r = -f q on the ramp segment's rightmost lane
};

namespace metanet {

/// q = k v (veh/h).
double flow(double density_vpkm, double speed_kmh);

/// A exp(B k + C L_v), capped above at `cap_kmh`.
double rain_speed_cap(double density_vpkm, double visibility_m, const RainSpeedDensityParams& p,
                      double cap_kmh = 200.0);

/// Desired speed: min of the rain-shaped fundamental diagram
/// v_f exp(-(1/h)(k/k_c)^h), the guidance term (1 + gamma) v_g when guidance is
/// active, and the rain term when one is supplied.
double desired_speed(double density_vpkm, const LaneParams& lane, std::optional<double> guidance_kmh,
                     std::optional<double> rain_term_kmh, const MetanetParams& mp);

/// Guided speed-density sensitivity, evaluated exactly as printed:
///   eta = -v_g k^(a-1) / (k_cr)^a * exp(-k^a / (a k_cr)).
double eta_correction(double guidance_kmh, double density_vpkm, const MetanetParams& mp);

/// Third term of the desired-speed minimum for segment i, or nullopt when dry
/// or when the scenario disables it.
std::optional<double> rain_term(double density_vpkm, std::size_t segment, const SafetyEnvelope& env,
                                const ScenarioConfig& cfg);

/// r per cell (veh/h) as applied by step(): explicit ramp flows plus exit extraction.
LaneGrid<double> ramp_flows(const LaneSegmentState& state, const BoundaryConditions& bc, const ScenarioConfig& cfg);

/// One prediction step of length cfg.time.prediction_step_s.
/// Throws NumericError naming the cell and term on a non-finite intermediate.
LaneSegmentState step(const LaneSegmentState& state, const GuidanceField& guidance, const BoundaryConditions& bc,
                      const SafetyEnvelope& env, const ScenarioConfig& cfg);

/// `steps` applications of step() under a fixed guidance field. `bcs` holds one
/// entry per step or a single entry reused for all. Returns the post-step states.
std::vector<LaneSegmentState> predict_horizon(const LaneSegmentState& state, const GuidanceField& guidance,
                                              const std::vector<BoundaryConditions>& bcs, const SafetyEnvelope& env,
                                              int steps, const ScenarioConfig& cfg);

/// Total vehicles on the network, sum of k * x over cells.
double vehicles_on_network(const LaneSegmentState& state, const ScenarioConfig& cfg);

/// CSV rows `cycle,lambda,i,j,k,v,q`; writes the header when `header` is set.
void write_trajectory_csv(std::ostream& out, const std::vector<LaneSegmentState>& trajectory, int cycle,
                          bool header);

}  // namespace metanet
}  // namespace rainvsl
