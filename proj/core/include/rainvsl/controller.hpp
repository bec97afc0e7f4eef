#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rainvsl/domain.hpp"
#include "rainvsl/lane_grid.hpp"
#include "rainvsl/metanet.hpp"
#include "rainvsl/pds.hpp"
#include "rainvsl/safety.hpp"

namespace rainvsl {

/// Guidance released for one control cycle.
struct GuidancePlan {
  int cycle = 0;
  LaneGrid<double> speed_kmh;
  double deceleration_ms2 = 0.0;
  PdsProfile pds;
  double objective = 0.0;
  bool feasible = true;

  friend bool operator==(const GuidancePlan&, const GuidancePlan&) = default;
};

struct ConstraintViolation {
  int constraint = 0;  // 15, 16, 17 or 18
  std::size_t segment = 0;
  std::size_t lane = 0;
  double lhs = 0.0;
  double bound = 0.0;
};

struct ConstraintReport {
  std::vector<ConstraintViolation> violations;

  bool feasible() const noexcept { return violations.empty(); }
  std::string describe() const;
};

/// Per-lane and aggregate dispersion; `empty` is set when no records were seen.
struct Dispersion {
  std::vector<double> per_lane;
  double aggregate = 0.0;
  bool empty = false;
};

struct SpeedRecord {
  std::size_t segment = 0;
  std::size_t lane = 0;
  double speed_kmh = 0.0;
};

/// Source of traffic states and consumer of plans for the control loop.
class Plant {
 public:
  virtual ~Plant() = default;
  /// Detector view of the current traffic state.
  virtual LaneSegmentState observe() = 0;
  /// Runs the plant for one control period under `plan`.
  virtual void apply(const GuidancePlan& plan, const SafetyEnvelope& env) = 0;
};

struct CycleRecord {
  int cycle = 0;
  double start_s = 0.0;
  LaneSegmentState observed;
  SafetyEnvelope envelope;
  GuidancePlan plan;
  std::vector<LaneSegmentState> prediction;
};

namespace controller {

/// J = dt * sum over steps and cells of x_i (a_TTT k - a_TTD k v) + a_SD SD,
/// dt in hours, x_i in km.
double objective(const std::vector<LaneSegmentState>& trajectory, const ObjectiveWeights& w, double sd,
                 const std::vector<double>& segment_lengths_km, double dt_h);
double objective(const std::vector<LaneSegmentState>& trajectory, double sd, const ScenarioConfig& cfg);

/// SD_j = sqrt((1/M) sum_i Var_ij) per lane; aggregate is the mean over lanes.
Dispersion dispersion_from_variances(const LaneGrid<double>& variance);

/// Spot-speed variance about each (segment, lane) mean. Cells without records
/// contribute zero variance.
Dispersion speed_dispersion(const std::vector<SpeedRecord>& records, std::size_t segments, std::size_t lanes);

/// Predictive proxy: Var_ij = (v_ij - mean_i v_ij)^2 averaged over the trajectory.
Dispersion predicted_dispersion(const std::vector<LaneSegmentState>& trajectory);

/// Speed, adjacent-band, temporal-band and deceleration checks against the envelope and (optionally) the previous plan. Bounds inclusive.
ConstraintReport check_constraints(const GuidancePlan& plan, const GuidancePlan* prev, const SafetyEnvelope& env,
                                   const ScenarioConfig& cfg);

/// Upper guidance bound for a cell: min(V_max, V_limit, v_f) floored to the speed grid.
double guidance_cap(std::size_t i, std::size_t j, const SafetyEnvelope& env, const ScenarioConfig& cfg);

/// Plan where every cell sits at guidance_cap, lowered just enough to keep
/// neighbouring segments within the adjacent band.
GuidancePlan envelope_cap_plan(const SafetyEnvelope& env, const ScenarioConfig& cfg);

/// Guidance field seen by the prediction model: the plan with the ramp cell of
/// the rightmost lane blended toward the PDS profile by the exit fraction.
LaneGrid<double> effective_guidance(const GuidancePlan& plan, const ScenarioConfig& cfg);

/// Fills the PDS profile from the plan's rightmost ramp-cell speed and deceleration.
void attach_pds(GuidancePlan& plan, const SafetyEnvelope& env, const ScenarioConfig& cfg);

/// Predicted J of a plan over one control period.
double evaluate_plan(const LaneSegmentState& state, const SafetyEnvelope& env, const GuidancePlan& plan,
                     const BoundaryConditions& bc, const ScenarioConfig& cfg,
                     std::vector<LaneSegmentState>* trajectory = nullptr);

/// Candidate deceleration values: multiples of the grid step up to a_max.
std::vector<double> deceleration_grid(double a_max, double step);

/// Projected coordinate descent over the speed and deceleration grids.
GuidancePlan optimize_cycle(const LaneSegmentState& state, const SafetyEnvelope& env, const GuidancePlan* prev,
                            const BoundaryConditions& bc, const ScenarioConfig& cfg, int cycle = 0);

/// Static legal-limit plan used by the baseline mode.
GuidancePlan legal_limit_plan(const ScenarioConfig& cfg);

/// Boundary conditions implied by the scenario demand.
BoundaryConditions demand_boundary(const ScenarioConfig& cfg);

/// One optimize-and-apply round per control period over the horizon.
/// A failing cycle is rethrown with its index.
std::vector<CycleRecord> run_control_loop(const ScenarioConfig& cfg, Plant& plant);

/// CSV rows `cycle,i,j,v_g,a_o,J,feasible`.
void write_plan_csv(std::ostream& out, const std::vector<GuidancePlan>& plans);

}  // namespace controller

/// Plant that advances the prediction model itself (model-in-the-loop runs).
class MetanetPlant : public Plant {
 public:
  explicit MetanetPlant(const ScenarioConfig& cfg);
  MetanetPlant(const ScenarioConfig& cfg, LaneSegmentState initial);

  LaneSegmentState observe() override { return state_; }
  void apply(const GuidancePlan& plan, const SafetyEnvelope& env) override;

  const std::vector<LaneSegmentState>& history() const noexcept { return history_; }

 private:
  const ScenarioConfig& cfg_;
  LaneSegmentState state_;
  double time_s_ = 0.0;
  std::vector<LaneSegmentState> history_;
};

}  // namespace rainvsl
