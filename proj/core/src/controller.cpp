#include "rainvsl/controller.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "rainvsl/errors.hpp"
#include "rainvsl/units.hpp"

namespace rainvsl {

std::string ConstraintReport::describe() const {
  if (violations.empty()) return "feasible";
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += fmt::format("constraint {} at ({}, {}): {} > {}", v.constraint, v.segment, v.lane, v.lhs, v.bound);
  }
  return out;
}

namespace controller {

namespace {

double floor_to_grid(double x, double step) { return step * std::floor(x / step + 1e-9); }
double ceil_to_grid(double x, double step) { return step * std::ceil(x / step - 1e-9); }

// Relative J differences below this count as ties.
constexpr double kTieTolerance = 1e-6;

bool better(double candidate, double incumbent) {
  return candidate < incumbent - kTieTolerance * std::max(1.0, std::abs(incumbent));
}

bool tied(double a, double b) { return !better(a, b) && !better(b, a); }

}  // namespace

double objective(const std::vector<LaneSegmentState>& trajectory, const ObjectiveWeights& w, double sd,
                 const std::vector<double>& segment_lengths_km, double dt_h) {
  double sum = 0.0;
  for (const auto& s : trajectory) {
    if (s.segments() != segment_lengths_km.size()) throw DomainError("objective: segment length list mismatch");
    for (std::size_t i = 0; i < s.segments(); ++i) {
      for (std::size_t j = 0; j < s.lanes(); ++j) {
        const double k = s.density_vpkm(i, j);
        sum += segment_lengths_km[i] * (w.ttt * k - w.ttd * k * s.speed_kmh(i, j));
      }
    }
  }
  return dt_h * sum + w.sd * sd;
}

double objective(const std::vector<LaneSegmentState>& trajectory, double sd, const ScenarioConfig& cfg) {
  std::vector<double> lengths;
  lengths.reserve(cfg.segments.size());
  for (const auto& seg : cfg.segments) lengths.push_back(seg.length_km());
  return objective(trajectory, cfg.weights, sd, lengths, s_to_h(cfg.time.prediction_step_s));
}

Dispersion dispersion_from_variances(const LaneGrid<double>& variance) {
  Dispersion d;
  const std::size_t m = variance.segments();
  const std::size_t n = variance.lanes();
  d.per_lane.assign(n, 0.0);
  if (m == 0 || n == 0) {
    d.empty = true;
    return d;
  }
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += variance(i, j);
    d.per_lane[j] = std::sqrt(sum / static_cast<double>(m));
  }
  for (double v : d.per_lane) d.aggregate += v;
  d.aggregate /= static_cast<double>(n);
  return d;
}

Dispersion speed_dispersion(const std::vector<SpeedRecord>& records, std::size_t segments, std::size_t lanes) {
  if (records.empty()) {
    spdlog::warn("speed_dispersion: no vehicle records, SD reported as 0");
    Dispersion d;
    d.per_lane.assign(lanes, 0.0);
    d.empty = true;
    return d;
  }
  LaneGrid<double> count(segments, lanes, 0.0);
  LaneGrid<double> mean(segments, lanes, 0.0);
  LaneGrid<double> m2(segments, lanes, 0.0);
  for (const auto& r : records) {
    if (r.segment >= segments || r.lane >= lanes) throw DomainError("speed_dispersion: record outside the grid");
    const double c = count(r.segment, r.lane) += 1.0;
    const double delta = r.speed_kmh - mean(r.segment, r.lane);
    mean(r.segment, r.lane) += delta / c;
    m2(r.segment, r.lane) += delta * (r.speed_kmh - mean(r.segment, r.lane));
  }
  LaneGrid<double> var(segments, lanes, 0.0);
  for (std::size_t i = 0; i < segments; ++i) {
    for (std::size_t j = 0; j < lanes; ++j) {
      if (count(i, j) > 0.0) var(i, j) = m2(i, j) / count(i, j);
    }
  }
  return dispersion_from_variances(var);
}

Dispersion predicted_dispersion(const std::vector<LaneSegmentState>& trajectory) {
  if (trajectory.empty()) {
    Dispersion d;
    d.empty = true;
    return d;
  }
  const std::size_t m = trajectory.front().segments();
  const std::size_t n = trajectory.front().lanes();
  LaneGrid<double> var(m, n, 0.0);
  for (const auto& s : trajectory) {
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) mean += s.speed_kmh(i, j);
      mean /= static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double dv = s.speed_kmh(i, j) - mean;
        var(i, j) += dv * dv;
      }
    }
  }
  for (double& v : var.flat()) v /= static_cast<double>(trajectory.size());
  return dispersion_from_variances(var);
}

ConstraintReport check_constraints(const GuidancePlan& plan, const GuidancePlan* prev, const SafetyEnvelope& env,
                                   const ScenarioConfig& cfg) {
  ConstraintReport report;
  const auto& v = plan.speed_kmh;
  const std::size_t m = cfg.segments.size();
  const std::size_t n = cfg.lane_count();
  if (v.segments() != m || v.lanes() != n) throw DomainError("check_constraints: plan shape mismatch");
  const auto& cp = cfg.control;

  for (std::size_t i = 0; i < m; ++i) {
    const double bound = std::min(env.max_safe_speed_kmh[i], cfg.segments[i].legal_limit_kmh);
    for (std::size_t j = 0; j < n; ++j) {
      if (v(i, j) > bound) report.violations.push_back({15, i, j, v(i, j), bound});
    }
  }
  for (std::size_t i = 0; i + 1 < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = std::abs(v(i + 1, j) - v(i, j));
      if (d > cp.adjacent_band_kmh) report.violations.push_back({16, i, j, d, cp.adjacent_band_kmh});
    }
  }
  if (prev != nullptr) {
    if (!prev->speed_kmh.same_shape(v)) throw DomainError("check_constraints: previous plan shape mismatch");
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double d = std::abs(v(i, j) - prev->speed_kmh(i, j));
        if (d > cp.cycle_band_kmh) report.violations.push_back({17, i, j, d, cp.cycle_band_kmh});
      }
    }
  }
  if (plan.deceleration_ms2 > env.max_deceleration_ms2 || !(plan.deceleration_ms2 > 0.0)) {
    report.violations.push_back({18, cfg.ramp_segment(), n - 1, plan.deceleration_ms2, env.max_deceleration_ms2});
  }
  return report;
}

double guidance_cap(std::size_t i, std::size_t j, const SafetyEnvelope& env, const ScenarioConfig& cfg) {
  const auto& seg = cfg.segments[i];
  const double cap = std::min({env.max_safe_speed_kmh[i], seg.legal_limit_kmh, seg.lanes[j].free_flow_speed_kmh});
  return std::max(0.0, floor_to_grid(cap, cfg.control.speed_step_kmh));
}

namespace {

// Lowers entries until neighbouring segments differ by at most `band`.
void lower_to_band(LaneGrid<double>& v, double band) {
  const std::size_t m = v.segments();
  for (std::size_t j = 0; j < v.lanes(); ++j) {
    for (std::size_t i = 1; i < m; ++i) v(i, j) = std::min(v(i, j), v(i - 1, j) + band);
    for (std::size_t i = m - 1; i-- > 0;) v(i, j) = std::min(v(i, j), v(i + 1, j) + band);
  }
}

double default_deceleration(const SafetyEnvelope& env, const ScenarioConfig& cfg) {
  const auto grid = deceleration_grid(env.max_deceleration_ms2, cfg.control.deceleration_step_ms2);
  return grid.back();
}

struct Box {
  LaneGrid<double> lo;
  LaneGrid<double> hi;
  bool ok = true;
};

Box feasible_box(const SafetyEnvelope& env, const GuidancePlan* prev, const ScenarioConfig& cfg) {
  const std::size_t m = cfg.segments.size();
  const std::size_t n = cfg.lane_count();
  const auto& cp = cfg.control;
  Box b{LaneGrid<double>(m, n), LaneGrid<double>(m, n), true};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double lo = ceil_to_grid(cp.min_guidance_kmh, cp.speed_step_kmh);
      double hi = guidance_cap(i, j, env, cfg);
      if (prev != nullptr) {
        lo = std::max(lo, prev->speed_kmh(i, j) - cp.cycle_band_kmh);
        hi = std::min(hi, prev->speed_kmh(i, j) + cp.cycle_band_kmh);
      }
      b.lo(i, j) = ceil_to_grid(lo, cp.speed_step_kmh);
      b.hi(i, j) = floor_to_grid(hi, cp.speed_step_kmh);
    }
  }
  // Arc consistency of the adjacent-segment band along each lane.
  const double band = cp.adjacent_band_kmh;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 1; i < m; ++i) {
      b.hi(i, j) = std::min(b.hi(i, j), b.hi(i - 1, j) + band);
      b.lo(i, j) = std::max(b.lo(i, j), b.lo(i - 1, j) - band);
    }
    for (std::size_t i = m - 1; i-- > 0;) {
      b.hi(i, j) = std::min(b.hi(i, j), b.hi(i + 1, j) + band);
      b.lo(i, j) = std::max(b.lo(i, j), b.lo(i + 1, j) - band);
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (b.lo(i, j) > b.hi(i, j)) b.ok = false;
    }
  }
  return b;
}

class Descent {
 public:
  Descent(const LaneSegmentState& state, const SafetyEnvelope& env, const BoundaryConditions& bc,
          const ScenarioConfig& cfg, const Box& box)
      : state_(state), env_(env), bc_(bc), cfg_(cfg), box_(box),
        decel_(deceleration_grid(env.max_deceleration_ms2, cfg.control.deceleration_step_ms2)) {}

  GuidancePlan run(GuidancePlan plan) {
    double best = eval(plan);
    const std::size_t m = cfg_.segments.size();
    const std::size_t n = cfg_.lane_count();
    const auto& cp = cfg_.control;
    for (int pass = 0; pass < cp.max_passes; ++pass) {
      bool improved = false;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double lo = box_.lo(i, j);
          double hi = box_.hi(i, j);
          if (i > 0) {
            lo = std::max(lo, plan.speed_kmh(i - 1, j) - cp.adjacent_band_kmh);
            hi = std::min(hi, plan.speed_kmh(i - 1, j) + cp.adjacent_band_kmh);
          }
          if (i + 1 < m) {
            lo = std::max(lo, plan.speed_kmh(i + 1, j) - cp.adjacent_band_kmh);
            hi = std::min(hi, plan.speed_kmh(i + 1, j) + cp.adjacent_band_kmh);
          }
          const double current = plan.speed_kmh(i, j);
          double chosen = current;
          double chosen_j = best;
          // Downward scan; ties keep the higher speed.
          for (double v = hi; v >= lo - 1e-9; v -= cp.speed_step_kmh) {
            if (v == current) continue;
            plan.speed_kmh(i, j) = v;
            const double jv = eval(plan);
            if (better(jv, chosen_j) || (tied(jv, chosen_j) && v > chosen)) {
              chosen = v;
              chosen_j = jv;
            }
          }
          plan.speed_kmh(i, j) = chosen;
          if (chosen != current) {
            improved = true;
            best = chosen_j;
          }
        }
      }
      const double current_a = plan.deceleration_ms2;
      double chosen_a = current_a;
      double chosen_j = best;
      for (double a : decel_) {
        if (a == current_a) continue;
        plan.deceleration_ms2 = a;
        const double ja = eval(plan);
        if (better(ja, chosen_j) || (tied(ja, chosen_j) && a < chosen_a)) {
          chosen_a = a;
          chosen_j = ja;
        }
      }
      plan.deceleration_ms2 = chosen_a;
      if (chosen_a != current_a) {
        improved = true;
        best = chosen_j;
      }
      if (!improved) break;
    }
    plan.objective = best;
    return plan;
  }

 private:
  double eval(GuidancePlan& plan) const { return evaluate_plan(state_, env_, plan, bc_, cfg_); }

  const LaneSegmentState& state_;
  const SafetyEnvelope& env_;
  const BoundaryConditions& bc_;
  const ScenarioConfig& cfg_;
  const Box& box_;
  std::vector<double> decel_;
};

}  // namespace

GuidancePlan envelope_cap_plan(const SafetyEnvelope& env, const ScenarioConfig& cfg) {
  const std::size_t m = cfg.segments.size();
  const std::size_t n = cfg.lane_count();
  GuidancePlan plan;
  plan.speed_kmh = LaneGrid<double>(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) plan.speed_kmh(i, j) = guidance_cap(i, j, env, cfg);
  }
  lower_to_band(plan.speed_kmh, cfg.control.adjacent_band_kmh);
  plan.deceleration_ms2 = default_deceleration(env, cfg);
  attach_pds(plan, env, cfg);
  return plan;
}

LaneGrid<double> effective_guidance(const GuidancePlan& plan, const ScenarioConfig& cfg) {
  LaneGrid<double> g = plan.speed_kmh;
  const double f = cfg.demand.exit_fraction;
  if (plan.pds.active() && f > 0.0) {
    const std::size_t r = cfg.ramp_segment();
    const std::size_t last = g.lanes() - 1;
    const double vj = g(r, last);
    const double mean = pds::mean_guidance_speed(plan.pds, cfg.segments[r].length_m);
    g(r, last) = vj - f * (vj - mean);
  }
  return g;
}

void attach_pds(GuidancePlan& plan, const SafetyEnvelope& env, const ScenarioConfig& cfg) {
  const std::size_t r = cfg.ramp_segment();
  const double vj = plan.speed_kmh(r, plan.speed_kmh.lanes() - 1);
  if (!(plan.deceleration_ms2 > 0.0)) {
    plan.pds = PdsProfile{0.0, plan.deceleration_ms2, vj, vj};
    return;
  }
  plan.pds = pds::size_pds(env, vj, plan.deceleration_ms2);
}

double evaluate_plan(const LaneSegmentState& state, const SafetyEnvelope& env, const GuidancePlan& plan,
                     const BoundaryConditions& bc, const ScenarioConfig& cfg,
                     std::vector<LaneSegmentState>* trajectory) {
  GuidancePlan p = plan;
  attach_pds(p, env, cfg);
  const GuidanceField g = effective_guidance(p, cfg);
  auto traj = metanet::predict_horizon(state, g, {bc}, env, cfg.time.steps_per_cycle(), cfg);
  const double sd = predicted_dispersion(traj).aggregate;
  const double j = objective(traj, sd, cfg);
  if (trajectory != nullptr) *trajectory = std::move(traj);
  return j;
}

std::vector<double> deceleration_grid(double a_max, double step) {
  if (!(a_max > 0.0)) throw DomainError("deceleration_grid: a_max must be > 0");
  std::vector<double> out;
  for (int k = 1; static_cast<double>(k) * step <= a_max + 1e-12; ++k) out.push_back(static_cast<double>(k) * step);
  if (out.empty()) out.push_back(a_max);
  return out;
}

GuidancePlan optimize_cycle(const LaneSegmentState& state, const SafetyEnvelope& env, const GuidancePlan* prev,
                            const BoundaryConditions& bc, const ScenarioConfig& cfg, int cycle) {
  const Box box = feasible_box(env, prev, cfg);
  if (!box.ok) {
    GuidancePlan plan = envelope_cap_plan(env, cfg);
    if (prev != nullptr) {
      for (std::size_t i = 0; i < plan.speed_kmh.segments(); ++i) {
        for (std::size_t j = 0; j < plan.speed_kmh.lanes(); ++j) {
          plan.speed_kmh(i, j) = std::min(plan.speed_kmh(i, j), prev->speed_kmh(i, j) + cfg.control.cycle_band_kmh);
        }
      }
      lower_to_band(plan.speed_kmh, cfg.control.adjacent_band_kmh);
    }
    plan.cycle = cycle;
    plan.feasible = false;
    attach_pds(plan, env, cfg);
    plan.objective = evaluate_plan(state, env, plan, bc, cfg);
    spdlog::warn("cycle {}: no plan satisfies every constraint; released the projected envelope cap", cycle);
    return plan;
  }

  const auto decel = deceleration_grid(env.max_deceleration_ms2, cfg.control.deceleration_step_ms2);
  Descent descent(state, env, bc, cfg, box);

  GuidancePlan from_cap;
  from_cap.speed_kmh = box.hi;
  from_cap.deceleration_ms2 = decel.back();
  from_cap = descent.run(from_cap);

  GuidancePlan best = from_cap;
  if (prev != nullptr) {
    GuidancePlan from_prev;
    from_prev.speed_kmh = prev->speed_kmh;
    for (std::size_t k = 0; k < from_prev.speed_kmh.size(); ++k) {
      auto& v = from_prev.speed_kmh.flat()[k];
      v = std::clamp(v, box.lo.flat()[k], box.hi.flat()[k]);
    }
    from_prev.deceleration_ms2 = decel.front();
    for (double a : decel) {
      if (a <= prev->deceleration_ms2 + 1e-12) from_prev.deceleration_ms2 = a;
    }
    from_prev = descent.run(from_prev);
    if (better(from_prev.objective, from_cap.objective)) best = from_prev;
  }
  best.cycle = cycle;
  best.feasible = true;
  attach_pds(best, env, cfg);
  return best;
}

GuidancePlan legal_limit_plan(const ScenarioConfig& cfg) {
  GuidancePlan plan;
  plan.speed_kmh = LaneGrid<double>(cfg.segments.size(), cfg.lane_count());
  for (std::size_t i = 0; i < cfg.segments.size(); ++i) {
    for (double& v : plan.speed_kmh.row(i)) v = cfg.segments[i].legal_limit_kmh;
  }
  plan.deceleration_ms2 = cfg.safety.max_deceleration_ms2;
  return plan;
}

BoundaryConditions demand_boundary(const ScenarioConfig& cfg) {
  BoundaryConditions bc;
  bc.inflow_vph = cfg.demand.inflow_vph;
  bc.exit_fraction = cfg.demand.exit_fraction;
  return bc;
}

std::vector<CycleRecord> run_control_loop(const ScenarioConfig& cfg, Plant& plant) {
  const BoundaryConditions bc = demand_boundary(cfg);
  std::vector<CycleRecord> out;
  const int cycles = cfg.time.cycles();
  out.reserve(static_cast<std::size_t>(cycles));
  for (int k = 0; k < cycles; ++k) {
    try {
      CycleRecord rec;
      rec.cycle = k;
      rec.start_s = k * cfg.time.control_period_s;
      rec.observed = plant.observe();
      rec.envelope = build_envelope(cfg, rec.start_s);
      const GuidancePlan* prev = out.empty() ? nullptr : &out.back().plan;
      rec.plan = optimize_cycle(rec.observed, rec.envelope, prev, bc, cfg, k);
      evaluate_plan(rec.observed, rec.envelope, rec.plan, bc, cfg, &rec.prediction);
      spdlog::info("cycle {}: J = {:.3f}, a_o = {}, l_d = {:.1f} m{}", k, rec.plan.objective,
                   rec.plan.deceleration_ms2, rec.plan.pds.length_m, rec.plan.feasible ? "" : " (infeasible)");
      plant.apply(rec.plan, rec.envelope);
      out.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error(fmt::format("control cycle {}: {}", k, e.what()));
    }
  }
  return out;
}

void write_plan_csv(std::ostream& out, const std::vector<GuidancePlan>& plans) {
  out << "cycle,i,j,v_g,a_o,J,feasible\n";
  for (const auto& p : plans) {
    for (std::size_t i = 0; i < p.speed_kmh.segments(); ++i) {
      for (std::size_t j = 0; j < p.speed_kmh.lanes(); ++j) {
        out << fmt::format("{},{},{},{},{},{},{}\n", p.cycle, i, j, p.speed_kmh(i, j), p.deceleration_ms2,
                           p.objective, p.feasible ? 1 : 0);
      }
    }
  }
}

}  // namespace controller

namespace {

LaneSegmentState demand_equilibrium(const ScenarioConfig& cfg) {
  LaneSegmentState s(cfg.segments.size(), cfg.lane_count());
  for (std::size_t i = 0; i < cfg.segments.size(); ++i) {
    for (std::size_t j = 0; j < cfg.lane_count(); ++j) {
      const double vf = cfg.segments[i].lanes[j].free_flow_speed_kmh;
      s.speed_kmh(i, j) = vf;
      s.density_vpkm(i, j) = cfg.demand.inflow_vph[j] / vf;
    }
  }
  return s;
}

}  // namespace

MetanetPlant::MetanetPlant(const ScenarioConfig& cfg) : MetanetPlant(cfg, demand_equilibrium(cfg)) {}

MetanetPlant::MetanetPlant(const ScenarioConfig& cfg, LaneSegmentState initial)
    : cfg_(cfg), state_(std::move(initial)) {}

void MetanetPlant::apply(const GuidancePlan& plan, const SafetyEnvelope& env) {
  const GuidanceField g = controller::effective_guidance(plan, cfg_);
  const BoundaryConditions bc = controller::demand_boundary(cfg_);
  const int steps = cfg_.time.steps_per_cycle();
  for (int s = 0; s < steps; ++s) {
    const SafetyEnvelope now = time_s_ < cfg_.time.horizon_s ? build_envelope(cfg_, time_s_) : env;
    state_ = metanet::step(state_, g, bc, now, cfg_);
    history_.push_back(state_);
    time_s_ += cfg_.time.prediction_step_s;
  }
}

}  // namespace rainvsl
