#include "rainvsl/microsim.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "rainvsl/errors.hpp"
#include "rainvsl/pds.hpp"
#include "rainvsl/units.hpp"

namespace rainvsl {

double adherence_share(const std::vector<StationSample>& samples, double band_kmh) {
  if (samples.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : samples) {
    if (std::abs(s.speed_kmh - s.guidance_kmh) <= band_kmh) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

Microsim::Microsim(const ScenarioConfig& cfg, std::uint64_t seed, double compliance)
    : cfg_(cfg), rng_(seed), compliance_(compliance) {
  if (compliance < 0.0 || compliance > 1.0) throw DomainError("Microsim: compliance must lie in [0, 1]");
  const auto& ms = cfg.microsim;
  double acc = 0.0;
  for (const auto& seg : cfg.segments) {
    acc += seg.length_m;
    segment_end_cell_.push_back(std::lround(acc / ms.cell_m));
  }
  road_cells_ = segment_end_cell_.empty() ? 0 : segment_end_cell_.back();
  const std::size_t n = cfg.lane_count();
  occupancy_.assign(n, std::vector<std::int32_t>(static_cast<std::size_t>(road_cells_), 0));
  queues_.resize(n);
  cycle_stats_ = LaneGrid<CellStats>(cfg.segments.size(), n);
  segment_speed_sum_.assign(cfg.segments.size(), 0.0);
  segment_speed_count_.assign(cfg.segments.size(), 0.0);
  refresh_envelope();
}

void Microsim::set_plan(std::optional<GuidancePlan> plan) {
  if (plan && (plan->speed_kmh.segments() != cfg_.segments.size() || plan->speed_kmh.lanes() != cfg_.lane_count())) {
    throw DomainError("Microsim: plan shape does not match the road");
  }
  plan_ = std::move(plan);
}

void Microsim::set_envelope(const SafetyEnvelope& env) {
  env_ = env;
  envelope_pinned_ = true;
}

void Microsim::refresh_envelope() {
  if (envelope_pinned_ || time_s_ >= cfg_.time.horizon_s) return;
  std::vector<double> rain(cfg_.segments.size());
  for (std::size_t i = 0; i < rain.size(); ++i) rain[i] = rainfall_at(cfg_.rainfall, i, time_s_);
  if (rain != env_rain_ || env_.segments() == 0) {
    env_ = build_envelope_for_rain(cfg_, rain, time_s_);
    env_rain_ = std::move(rain);
  }
}

int Microsim::cells_for(double speed_kmh) const {
  const double cells = kmh_to_ms(speed_kmh) * cfg_.time.sim_step_s / cfg_.microsim.cell_m;
  return std::max(0, static_cast<int>(std::floor(cells + 1e-9)));
}

double Microsim::kmh_for(int cells) const {
  return ms_to_kmh(static_cast<double>(cells) * cfg_.microsim.cell_m / cfg_.time.sim_step_s);
}

std::size_t Microsim::segment_of(long cell) const {
  for (std::size_t i = 0; i < segment_end_cell_.size(); ++i) {
    if (cell < segment_end_cell_[i]) return i;
  }
  return segment_end_cell_.size() - 1;
}

int Microsim::lane_max_cells(std::size_t segment, std::size_t lane) const {
  const auto& seg = cfg_.segments[segment];
  const double v = std::min({seg.lanes[lane].free_flow_speed_kmh, seg.legal_limit_kmh, env_.max_safe_speed_kmh[segment]});
  return cells_for(v);
}

std::optional<double> Microsim::guidance_at(const Vehicle& v, long cell) const {
  if (!plan_ || !v.compliant) return std::nullopt;
  const std::size_t i = segment_of(std::clamp(cell, 0L, road_cells_ - 1));
  double g = plan_->speed_kmh(i, v.lane);
  if (v.exiting && plan_->pds.active()) {
    const double s = std::max(0.0, static_cast<double>(road_cells_ - cell) * cfg_.microsim.cell_m);
    if (s <= plan_->pds.length_m) g = std::min(g, pds::pds_guidance_speed(s, plan_->pds));
  }
  return g;
}

bool Microsim::cells_free(std::size_t lane, long from, long to) const {
  const auto& occ = occupancy_[lane];
  for (long c = std::max(0L, from); c <= std::min(to, road_cells_ - 1); ++c) {
    if (occ[static_cast<std::size_t>(c)] != 0) return false;
  }
  return true;
}

long Microsim::gap_ahead(std::size_t lane, long front, std::size_t self) const {
  const long limit = 200;
  const auto& occ = occupancy_[lane];
  for (long c = front + 1; c <= front + limit; ++c) {
    if (c >= road_cells_) return limit;
    const auto o = occ[static_cast<std::size_t>(c)];
    if (o != 0 && static_cast<std::size_t>(o - 1) != self) return c - front - 1;
  }
  return limit;
}

long Microsim::gap_behind(std::size_t lane, long rear, std::size_t* follower) const {
  const long limit = 200;
  const auto& occ = occupancy_[lane];
  for (long c = rear - 1; c >= rear - limit; --c) {
    if (c < 0) return limit;
    const auto o = occ[static_cast<std::size_t>(c)];
    if (o != 0) {
      *follower = static_cast<std::size_t>(o - 1);
      return rear - c - 1;
    }
  }
  return limit;
}

void Microsim::occupy(const Vehicle& v, std::int32_t value) {
  auto& occ = occupancy_[v.lane];
  const long len = cfg_.microsim.vehicle_cells;
  for (long c = std::max(0L, v.front - len + 1); c <= std::min(v.front, road_cells_ - 1); ++c) {
    auto& cell = occ[static_cast<std::size_t>(c)];
    if (value != 0 && cell != 0) {
      throw std::logic_error(fmt::format("microsim: collision in lane {} at cell {} (t = {} s)", v.lane, c, time_s_));
    }
    cell = value;
  }
}

void Microsim::log(const Vehicle& v, const std::string& kind) {
  events_.push_back({time_s_, v.id, v.lane, static_cast<double>(v.front) * cfg_.microsim.cell_m, kmh_for(v.speed), kind});
}

std::uint64_t Microsim::insert_vehicle(std::size_t lane, long front, int speed, bool compliant, bool exiting) {
  if (lane >= occupancy_.size()) throw DomainError("insert_vehicle: no such lane");
  if (front < 0 || front >= road_cells_) throw DomainError("insert_vehicle: position outside the road");
  if (!cells_free(lane, front - cfg_.microsim.vehicle_cells + 1, front)) {
    throw DomainError("insert_vehicle: cells already occupied");
  }
  Vehicle v{next_id_++, lane, front, speed, compliant, exiting, time_s_};
  vehicles_.push_back(v);
  occupy(v, static_cast<std::int32_t>(vehicles_.size()));
  ++spawned_;
  return v.id;
}

void Microsim::spawn_vehicles() {
  std::bernoulli_distribution comply(compliance_);
  std::bernoulli_distribution exit(cfg_.demand.exit_fraction);
  const std::size_t last = cfg_.lane_count() - 1;
  for (std::size_t j = 0; j < queues_.size(); ++j) {
    const double p = std::clamp(cfg_.demand.inflow_vph[j] * s_to_h(cfg_.time.sim_step_s), 0.0, 1.0);
    if (std::bernoulli_distribution(p)(rng_)) {
      Vehicle v;
      v.lane = j;
      v.compliant = comply(rng_);
      const bool ex = exit(rng_);
      v.exiting = j == last && ex;
      queues_[j].push_back(v);
    }
    if (queues_[j].empty() || !cells_free(j, 0, 0)) continue;
    Vehicle v = queues_[j].front();
    queues_[j].pop_front();
    v.id = next_id_++;
    v.front = 0;
    v.entry_s = time_s_;
    int speed = std::min<long>(lane_max_cells(0, j), gap_ahead(j, 0, std::numeric_limits<std::size_t>::max()));
    if (auto g = guidance_at(v, 0)) speed = std::min(speed, cells_for(*g));
    v.speed = speed;
    vehicles_.push_back(v);
    occupy(v, static_cast<std::int32_t>(vehicles_.size()));
    ++spawned_;
    log(v, "spawn");
  }
}

void Microsim::change_lanes() {
  const std::size_t lanes = cfg_.lane_count();
  const long len = cfg_.microsim.vehicle_cells;
  for (std::size_t k = 0; k < vehicles_.size(); ++k) {
    Vehicle& v = vehicles_[k];
    if (v.exiting || v.front < len - 1) continue;
    const std::size_t seg = segment_of(v.front);
    const long desired = std::min(v.speed + 1, lane_max_cells(seg, v.lane));
    const long here = gap_ahead(v.lane, v.front, k);
    if (here >= desired) continue;
    for (int dir : {-1, +1}) {
      const long target_l = static_cast<long>(v.lane) + dir;
      if (target_l < 0 || target_l >= static_cast<long>(lanes)) continue;
      const auto target = static_cast<std::size_t>(target_l);
      if (!cells_free(target, v.front - len + 1, v.front)) continue;
      if (gap_ahead(target, v.front, k) <= here) continue;
      std::size_t follower = vehicles_.size();
      const long back = gap_behind(target, v.front - len + 1, &follower);
      if (follower < vehicles_.size() && back < vehicles_[follower].speed) continue;
      occupy(v, 0);
      v.lane = target;
      occupy(v, static_cast<std::int32_t>(k + 1));
      ++lane_changes_;
      log(v, "lane_change");
      break;
    }
  }
}

void Microsim::ca_step() {
  refresh_envelope();
  if (cfg_.microsim.lane_changes) change_lanes();

  const double dt = cfg_.time.sim_step_s;
  const double cell = cfg_.microsim.cell_m;
  vehicle_steps_ += static_cast<double>(vehicles_.size());

  std::bernoulli_distribution slow(cfg_.microsim.p_slow);
  std::vector<int> speed(vehicles_.size());
  for (std::size_t k = 0; k < vehicles_.size(); ++k) {
    const Vehicle& v = vehicles_[k];
    // Guidance caps are checked where the vehicle would end up.
    auto obey = [&](int s) {
      while (s > 0) {
        const auto g = guidance_at(v, v.front + s);
        if (!g) break;
        const int cap = cells_for(*g);
        if (s <= cap) break;
        s = std::min(s - 1, cap);
      }
      return s;
    };
    int s = obey(std::min(v.speed + 1, lane_max_cells(segment_of(v.front), v.lane)));
    s = static_cast<int>(std::min<long>(s, gap_ahead(v.lane, v.front, k)));
    if (slow(rng_)) s = std::max(s - 1, 0);
    speed[k] = obey(s);
  }

  std::vector<Vehicle> kept;
  kept.reserve(vehicles_.size());
  const std::size_t ramp_lane = cfg_.lane_count() - 1;
  for (std::size_t k = 0; k < vehicles_.size(); ++k) {
    Vehicle v = vehicles_[k];
    const long old = v.front;
    v.speed = speed[k];
    v.front = old + v.speed;
    displacement_cells_ += static_cast<double>(std::min(v.front, road_cells_) - old);

    if (v.exiting && v.lane == ramp_lane) {
      for (double off : cfg_.microsim.station_offsets_m) {
        const long at = road_cells_ - std::lround(off / cell);
        if (old < at && v.front >= at) {
          double g = plan_ ? plan_->speed_kmh(cfg_.ramp_segment(), ramp_lane) : cfg_.segments.back().legal_limit_kmh;
          if (plan_ && plan_->pds.active() && off <= plan_->pds.length_m) g = pds::pds_guidance_speed(off, plan_->pds);
          samples_.push_back({off, time_s_ + dt, v.id, kmh_for(v.speed), g, v.compliant});
        }
      }
    }

    if (v.front >= road_cells_) {
      if (v.exiting) {
        ++exited_ramp_;
        log(v, "exit_ramp");
        if (kmh_for(v.speed) > env_.ramp_safe_speed_kmh + cfg_.microsim.exit_speed_tolerance_kmh) {
          ++overspeed_;
          log(v, "overspeed_exit");
        }
      } else {
        ++exited_mainline_;
        log(v, "exit_mainline");
      }
      continue;
    }

    const std::size_t seg = segment_of(v.front);
    const double kmh = kmh_for(v.speed);
    auto& st = cycle_stats_(seg, v.lane);
    st.n += 1.0;
    const double delta = kmh - st.mean;
    st.mean += delta / st.n;
    st.m2 += delta * (kmh - st.mean);
    const bool in_pds = v.exiting && plan_ && plan_->pds.active() &&
                        static_cast<double>(road_cells_ - v.front) * cell <= plan_->pds.length_m;
    if (!in_pds) {
      segment_speed_sum_[seg] += kmh;
      segment_speed_count_[seg] += 1.0;
    }
    kept.push_back(v);
  }
  vehicles_ = std::move(kept);

  for (auto& lane : occupancy_) std::fill(lane.begin(), lane.end(), 0);
  for (std::size_t k = 0; k < vehicles_.size(); ++k) occupy(vehicles_[k], static_cast<std::int32_t>(k + 1));

  time_s_ += dt;
  ++step_index_;
  if (step_index_ % cfg_.time.sim_steps_per_cycle() == 0) record_cycle_stats();
}

void Microsim::step() {
  refresh_envelope();
  spawn_vehicles();
  ca_step();
}

void Microsim::record_cycle_stats() {
  const std::size_t m = cfg_.segments.size();
  const std::size_t n = cfg_.lane_count();
  LaneGrid<double> var(m, n, 0.0);
  LaneGrid<double> lane_mean(m, n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& st = cycle_stats_(i, j);
      if (st.n > 0.0) {
        var(i, j) = st.m2 / st.n;
        lane_mean(i, j) = st.mean;
      }
    }
  }
  sd_per_cycle_.push_back(controller::dispersion_from_variances(var).per_lane);
  lane_means_.push_back(lane_mean);
  std::vector<double> seg_mean(m, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < m; ++i) {
    if (segment_speed_count_[i] > 0.0) seg_mean[i] = segment_speed_sum_[i] / segment_speed_count_[i];
  }
  segment_means_.push_back(std::move(seg_mean));
  cycle_stats_ = LaneGrid<CellStats>(m, n);
  std::fill(segment_speed_sum_.begin(), segment_speed_sum_.end(), 0.0);
  std::fill(segment_speed_count_.begin(), segment_speed_count_.end(), 0.0);
}

LaneSegmentState Microsim::detect() const {
  const std::size_t m = cfg_.segments.size();
  const std::size_t n = cfg_.lane_count();
  LaneGrid<double> count(m, n, 0.0);
  LaneGrid<double> sum(m, n, 0.0);
  for (const auto& v : vehicles_) {
    const std::size_t i = segment_of(v.front);
    count(i, v.lane) += 1.0;
    sum(i, v.lane) += kmh_for(v.speed);
  }
  LaneSegmentState s(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s.density_vpkm(i, j) = count(i, j) / cfg_.segments[i].length_km();
      s.speed_kmh(i, j) = count(i, j) > 0.0 ? sum(i, j) / count(i, j) : cfg_.segments[i].lanes[j].free_flow_speed_kmh;
    }
  }
  s.step = static_cast<int>(step_index_);
  return s;
}

void Microsim::check_no_overlap() const {
  const long len = cfg_.microsim.vehicle_cells;
  std::vector<std::vector<char>> seen(occupancy_.size(), std::vector<char>(static_cast<std::size_t>(road_cells_), 0));
  for (const auto& v : vehicles_) {
    for (long c = std::max(0L, v.front - len + 1); c <= std::min(v.front, road_cells_ - 1); ++c) {
      auto& cell = seen[v.lane][static_cast<std::size_t>(c)];
      if (cell) throw std::logic_error(fmt::format("microsim: overlap in lane {} at cell {}", v.lane, c));
      cell = 1;
    }
  }
}

MetricsReport Microsim::metrics() const {
  MetricsReport r;
  r.ttt_veh_h = s_to_h(vehicle_steps_ * cfg_.time.sim_step_s);
  r.ttd_veh_km = m_to_km(displacement_cells_ * cfg_.microsim.cell_m);
  const std::size_t n = cfg_.lane_count();
  r.sd_per_lane.assign(n, 0.0);
  for (const auto& c : sd_per_cycle_) {
    for (std::size_t j = 0; j < n; ++j) r.sd_per_lane[j] += c[j];
  }
  if (!sd_per_cycle_.empty()) {
    for (double& v : r.sd_per_lane) v /= static_cast<double>(sd_per_cycle_.size());
  }
  for (double v : r.sd_per_lane) r.sd += v;
  r.sd /= static_cast<double>(n);

  r.adherence = adherence_share(samples_);
  for (double off : cfg_.microsim.station_offsets_m) {
    std::vector<StationSample> yes;
    std::vector<StationSample> no;
    for (const auto& s : samples_) {
      if (s.offset_m != off) continue;
      (s.compliant ? yes : no).push_back(s);
    }
    r.station_adherence.push_back({off, yes.size(), no.size(), adherence_share(yes), adherence_share(no)});
  }
  r.segment_mean_speed_kmh = segment_means_;
  r.lane_mean_speed_kmh = lane_means_;
  r.spawned = spawned_;
  r.exited_mainline = exited_mainline_;
  r.exited_ramp = exited_ramp_;
  r.present = vehicles_.size();
  for (const auto& q : queues_) r.queued += q.size();
  r.overspeed_exits = overspeed_;
  r.lane_changes = lane_changes_;
  return r;
}

void MicrosimPlant::apply(const GuidancePlan& plan, const SafetyEnvelope& /*env*/) {
  // The simulator follows the rainfall schedule itself, step by step.
  sim_.set_plan(plan);
  const int steps = sim_.config().time.sim_steps_per_cycle();
  for (int s = 0; s < steps; ++s) sim_.step();
}

SimulationResult run_simulation(const ScenarioConfig& cfg, RunMode mode, std::uint64_t seed) {
  Microsim sim(cfg, seed, cfg.control.compliance);
  SimulationResult result;
  if (mode == RunMode::baseline) {
    sim.set_plan(controller::legal_limit_plan(cfg));
    const long steps = static_cast<long>(cfg.time.cycles()) * cfg.time.sim_steps_per_cycle();
    for (long s = 0; s < steps; ++s) sim.step();
  } else {
    MicrosimPlant plant(sim);
    result.cycles = controller::run_control_loop(cfg, plant);
  }
  result.metrics = sim.metrics();
  result.stations = sim.station_samples();
  result.events = sim.events();
  return result;
}

void write_station_csv(std::ostream& out, const std::vector<StationSample>& samples) {
  out << "station_m,t,vehicle,v,v_g,compliant\n";
  for (const auto& s : samples) {
    out << fmt::format("{},{},{},{},{},{}\n", s.offset_m, s.time_s, s.vehicle, s.speed_kmh, s.guidance_kmh,
                       s.compliant ? 1 : 0);
  }
}

void write_event_log(std::ostream& out, const std::vector<SimEvent>& events) {
  for (const auto& e : events) {
    out << fmt::format("t={} id={} lane={} pos_m={} v_kmh={} event={}\n", e.time_s, e.vehicle, e.lane + 1,
                       e.position_m, e.speed_kmh, e.kind);
  }
}

void write_pds_csv(std::ostream& out, const std::vector<CycleRecord>& cycles) {
  out << "cycle,l_d,a_o,V_r,V_j3\n";
  for (const auto& c : cycles) {
    const auto& p = c.plan.pds;
    out << fmt::format("{},{},{},{},{}\n", c.cycle, p.length_m, p.deceleration_ms2, p.ramp_speed_kmh,
                       p.entry_speed_kmh);
  }
}

std::string_view to_string(RunMode mode) { return mode == RunMode::baseline ? "baseline" : "control"; }

}  // namespace rainvsl
