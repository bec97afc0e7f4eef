#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rainvsl/controller.hpp"
#include "rainvsl/domain.hpp"
#include "rainvsl/lane_grid.hpp"
#include "rainvsl/metanet.hpp"
#include "rainvsl/safety.hpp"

namespace rainvsl {

struct Vehicle {
  std::uint64_t id = 0;
  std::size_t lane = 0;
  long front = 0;  // cell index of the front bumper
  int speed = 0;   // cells per step
  bool compliant = false;
  bool exiting = false;
  double entry_s = 0.0;
};

struct StationSample {
  double offset_m = 0.0;  // distance upstream of the gore
  double time_s = 0.0;
  std::uint64_t vehicle = 0;
  double speed_kmh = 0.0;
  double guidance_kmh = 0.0;
  bool compliant = false;
};

struct SimEvent {
  double time_s = 0.0;
  std::uint64_t vehicle = 0;
  std::size_t lane = 0;
  double position_m = 0.0;
  double speed_kmh = 0.0;
  std::string kind;
};

struct StationAdherence {
  double offset_m = 0.0;
  std::size_t compliant_samples = 0;
  std::size_t noncompliant_samples = 0;
  double compliant = 0.0;     // share within the band; 0 when no samples
  double noncompliant = 0.0;
};

struct MetricsReport {
  double ttt_veh_h = 0.0;
  double ttd_veh_km = 0.0;
  std::vector<double> sd_per_lane;
  double sd = 0.0;
  double adherence = 0.0;
  std::vector<StationAdherence> station_adherence;
  std::vector<std::vector<double>> segment_mean_speed_kmh;  // [cycle][segment]
  std::vector<LaneGrid<double>> lane_mean_speed_kmh;        // per cycle
  std::uint64_t spawned = 0;
  std::uint64_t exited_mainline = 0;
  std::uint64_t exited_ramp = 0;
  std::uint64_t present = 0;
  std::uint64_t queued = 0;
  std::uint64_t overspeed_exits = 0;
  std::uint64_t lane_changes = 0;
};

/// Share of samples whose speed lies within `band_kmh` of the guidance.
double adherence_share(const std::vector<StationSample>& samples, double band_kmh = 5.0);

/// Cellular-automaton road: one array of cells per lane, vehicles of fixed
/// length, parallel speed update after sequential lane changes.
class Microsim {
 public:
  Microsim(const ScenarioConfig& cfg, std::uint64_t seed, double compliance);

  /// Guidance followed by compliant drivers; nullopt disables guidance.
  void set_plan(std::optional<GuidancePlan> plan);
  /// Overrides the rainfall-driven envelope lookup (useful for tests).
  void set_envelope(const SafetyEnvelope& env);

  /// Arrival draws and queued entries for the current step.
  void spawn_vehicles();
  /// Lane changes, speed update and movement for one step.
  void ca_step();
  /// spawn_vehicles() followed by ca_step(), with metric bookkeeping.
  void step();

  /// Per-cell density, mean speed and flow from the current vehicles.
  LaneSegmentState detect() const;
  MetricsReport metrics() const;

  /// Places a vehicle directly (tests). Throws DomainError if cells are taken.
  std::uint64_t insert_vehicle(std::size_t lane, long front, int speed, bool compliant, bool exiting);

  const std::vector<Vehicle>& vehicles() const noexcept { return vehicles_; }
  const std::vector<StationSample>& station_samples() const noexcept { return samples_; }
  const std::vector<SimEvent>& events() const noexcept { return events_; }
  double time_s() const noexcept { return time_s_; }
  long road_cells() const noexcept { return road_cells_; }
  const SafetyEnvelope& envelope() const noexcept { return env_; }
  const ScenarioConfig& config() const noexcept { return cfg_; }

  /// Natural lane maximum in cells/step at segment i.
  int lane_max_cells(std::size_t segment, std::size_t lane) const;
  /// Speed cap in cells/step for a guidance speed in km/h (floored).
  int cells_for(double speed_kmh) const;
  double kmh_for(int cells) const;
  std::size_t segment_of(long cell) const;
  /// Guidance speed (km/h) that applies to `v` when its front is at `cell`;
  /// nullopt when the vehicle follows no guidance.
  std::optional<double> guidance_at(const Vehicle& v, long cell) const;

  /// Throws std::logic_error if two vehicles overlap.
  void check_no_overlap() const;

 private:
  void refresh_envelope();
  long gap_ahead(std::size_t lane, long front, std::size_t self) const;
  long gap_behind(std::size_t lane, long rear, std::size_t* follower) const;
  bool cells_free(std::size_t lane, long from, long to) const;
  void occupy(const Vehicle& v, std::int32_t value);
  void change_lanes();
  void record_cycle_stats();
  void log(const Vehicle& v, const std::string& kind);

  const ScenarioConfig& cfg_;
  std::mt19937_64 rng_;
  double compliance_;
  std::optional<GuidancePlan> plan_;
  bool envelope_pinned_ = false;
  std::vector<double> env_rain_;
  SafetyEnvelope env_;

  long road_cells_ = 0;
  std::vector<long> segment_end_cell_;
  std::vector<std::vector<std::int32_t>> occupancy_;  // per lane, vehicle slot + 1
  std::vector<Vehicle> vehicles_;
  std::vector<std::deque<Vehicle>> queues_;
  std::uint64_t next_id_ = 1;
  double time_s_ = 0.0;
  long step_index_ = 0;

  // Metric accumulators.
  double vehicle_steps_ = 0.0;
  double displacement_cells_ = 0.0;
  std::uint64_t spawned_ = 0;
  std::uint64_t exited_mainline_ = 0;
  std::uint64_t exited_ramp_ = 0;
  std::uint64_t overspeed_ = 0;
  std::uint64_t lane_changes_ = 0;
  std::vector<StationSample> samples_;
  std::vector<SimEvent> events_;

  struct CellStats {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;
  };
  LaneGrid<CellStats> cycle_stats_;
  std::vector<double> segment_speed_sum_;
  std::vector<double> segment_speed_count_;
  std::vector<std::vector<double>> sd_per_cycle_;
  std::vector<std::vector<double>> segment_means_;
  std::vector<LaneGrid<double>> lane_means_;
};

enum class RunMode { baseline, control };

struct SimulationResult {
  MetricsReport metrics;
  std::vector<CycleRecord> cycles;  // empty in baseline mode
  std::vector<StationSample> stations;
  std::vector<SimEvent> events;
};

/// Full-horizon run. Baseline releases the static legal-limit plan; control
/// drives the simulator through the rolling-horizon loop.
SimulationResult run_simulation(const ScenarioConfig& cfg, RunMode mode, std::uint64_t seed);

/// Plant adapter so the control loop can drive the cellular automaton.
class MicrosimPlant : public Plant {
 public:
  explicit MicrosimPlant(Microsim& sim) : sim_(sim) {}
  LaneSegmentState observe() override { return sim_.detect(); }
  void apply(const GuidancePlan& plan, const SafetyEnvelope& env) override;

 private:
  Microsim& sim_;
};

void write_station_csv(std::ostream& out, const std::vector<StationSample>& samples);
void write_event_log(std::ostream& out, const std::vector<SimEvent>& events);
void write_pds_csv(std::ostream& out, const std::vector<CycleRecord>& cycles);

std::string_view to_string(RunMode mode);

}  // namespace rainvsl
