#include "rainvsl/metanet.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "rainvsl/errors.hpp"
#include "rainvsl/units.hpp"

namespace rainvsl::metanet {

double flow(double density_vpkm, double speed_kmh) { return density_vpkm * speed_kmh; }

double rain_speed_cap(double density_vpkm, double visibility_m, const RainSpeedDensityParams& p, double cap_kmh) {
  const double exponent = p.b * density_vpkm + p.c * visibility_m;
  // Compare in log space so extreme exponents never overflow.
  if (p.a > 0.0 && exponent > std::log(cap_kmh / p.a)) return cap_kmh;
  return std::min(cap_kmh, p.a * std::exp(exponent));
}

double desired_speed(double density_vpkm, const LaneParams& lane, std::optional<double> guidance_kmh,
                     std::optional<double> rain_term_kmh, const MetanetParams& mp) {
  const double ratio = density_vpkm / lane.critical_density_vpkm;
  double v = lane.free_flow_speed_kmh * std::exp(-(1.0 / mp.rain_exponent) * std::pow(ratio, mp.rain_exponent));
  if (guidance_kmh) v = std::min(v, (1.0 + mp.gamma_margin) * *guidance_kmh);
  if (rain_term_kmh) v = std::min(v, *rain_term_kmh);
  return v;
}

double eta_correction(double guidance_kmh, double density_vpkm, const MetanetParams& mp) {
  const double a = mp.fd_exponent;
  const double kcr = mp.guided_critical_density_vpkm;
  if (density_vpkm <= 0.0) return 0.0;
  return -guidance_kmh * std::pow(density_vpkm, a - 1.0) / std::pow(kcr, a) *
         std::exp(-std::pow(density_vpkm, a) / (a * kcr));
}

std::optional<double> rain_term(double density_vpkm, std::size_t segment, const SafetyEnvelope& env,
                                const ScenarioConfig& cfg) {
  if (segment >= env.rain_mmh.size() || !(env.rain_mmh[segment] > 0.0)) return std::nullopt;
  switch (cfg.metanet.rain_cap) {
    case RainCapModel::none:
      return std::nullopt;
    case RainCapModel::speed_density:
      return rain_speed_cap(density_vpkm, env.visibility_m[segment], cfg.rain_speed_density,
                            cfg.metanet.rain_cap_max_kmh);
    case RainCapModel::sight_distance:
      return env.max_safe_speed_kmh[segment];
  }
  return std::nullopt;
}

LaneGrid<double> ramp_flows(const LaneSegmentState& state, const BoundaryConditions& bc, const ScenarioConfig& cfg) {
  const std::size_t m = state.segments();
  const std::size_t n = state.lanes();
  LaneGrid<double> r(m, n, 0.0);
  if (bc.ramp_flow_vph.size() != 0) {
    if (!bc.ramp_flow_vph.same_shape(r)) throw DomainError("ramp_flows: explicit ramp grid has the wrong shape");
    r = bc.ramp_flow_vph;
  }
  if (bc.exit_fraction > 0.0) {
    const std::size_t i = cfg.ramp_segment();
    r(i, n - 1) -= bc.exit_fraction * state.flow_vph(i, n - 1);
  }
  return r;
}

namespace {

void check_finite(double x, std::size_t i, std::size_t j, const char* term) {
  if (!std::isfinite(x)) {
    throw NumericError(fmt::format("metanet step: non-finite {} at segment {}, lane {}", term, i, j));
  }
}

}  // namespace

LaneSegmentState step(const LaneSegmentState& state, const GuidanceField& guidance, const BoundaryConditions& bc,
                      const SafetyEnvelope& env, const ScenarioConfig& cfg) {
  const std::size_t m = state.segments();
  const std::size_t n = state.lanes();
  if (m != cfg.segments.size() || n != cfg.lane_count()) {
    throw DomainError("metanet step: state shape does not match the scenario geometry");
  }
  if (bc.inflow_vph.size() != n) throw DomainError("metanet step: inflow needs one value per lane");
  if (guidance && !guidance->same_shape(state.density_vpkm)) {
    throw DomainError("metanet step: guidance grid has the wrong shape");
  }

  const auto& mp = cfg.metanet;
  const double dt_h = s_to_h(cfg.time.prediction_step_s);
  const double tau_h = s_to_h(mp.tau_s);
  const LaneGrid<double> r = ramp_flows(state, bc, cfg);

  LaneSegmentState next(m, n);
  next.step = state.step + 1;

  for (std::size_t i = 0; i < m; ++i) {
    const auto& seg = cfg.segments[i];
    const double x_km = seg.length_km();
    for (std::size_t j = 0; j < n; ++j) {
      const double k = state.density_vpkm(i, j);
      const double v = state.speed_kmh(i, j);
      const double q = k * v;

      const double q_up = i == 0 ? bc.inflow_vph[j] : state.flow_vph(i - 1, j);
      const double v_up = i == 0 ? (bc.upstream_speed_kmh.empty() ? v : bc.upstream_speed_kmh[j])
                                 : state.speed_kmh(i - 1, j);
      const double k_down = i + 1 == m
                                ? (bc.downstream_density_vpkm.empty() ? k : bc.downstream_density_vpkm[j])
                                : state.density_vpkm(i + 1, j);

      double k_next = k + dt_h / x_km * (q_up - q + r(i, j));
      check_finite(k_next, i, j, "density");

      std::optional<double> vg;
      if (guidance) vg = (*guidance)(i, j);
      const double v_desired = desired_speed(k, seg.lanes[j], vg, rain_term(k, i, env, cfg), mp);
      const double eta = eta_correction(vg.value_or(seg.lanes[j].free_flow_speed_kmh), k, mp);

      const double relaxation = dt_h / tau_h * (v_desired - v);
      const double convection = mp.omega * dt_h / x_km * v * (v_up - v);
      const double anticipation = (1.0 / tau_h) * (eta * dt_h / x_km) * (k_down - k) / (k + mp.kappa_vpkm);
      check_finite(relaxation, i, j, "relaxation");
      check_finite(convection, i, j, "convection");
      check_finite(anticipation, i, j, "anticipation");
      double v_next = v + relaxation + convection - anticipation;

      if (k_next < 0.0) {
        spdlog::debug("metanet density clamp at ({}, {}): {} -> 0", i, j, k_next);
        k_next = 0.0;
      }
      if (v_next < 0.0) {
        spdlog::debug("metanet speed clamp at ({}, {}): {} -> 0", i, j, v_next);
        v_next = 0.0;
      }
      next.density_vpkm(i, j) = k_next;
      next.speed_kmh(i, j) = v_next;
    }
  }
  return next;
}

std::vector<LaneSegmentState> predict_horizon(const LaneSegmentState& state, const GuidanceField& guidance,
                                              const std::vector<BoundaryConditions>& bcs, const SafetyEnvelope& env,
                                              int steps, const ScenarioConfig& cfg) {
  if (steps < 1) throw DomainError("predict_horizon: need at least one step");
  if (bcs.empty() || (bcs.size() != 1 && static_cast<int>(bcs.size()) != steps)) {
    throw DomainError("predict_horizon: boundary sequence must hold 1 or `steps` entries");
  }
  std::vector<LaneSegmentState> out;
  out.reserve(static_cast<std::size_t>(steps));
  const LaneSegmentState* current = &state;
  for (int s = 0; s < steps; ++s) {
    const auto& bc = bcs.size() == 1 ? bcs.front() : bcs[static_cast<std::size_t>(s)];
    try {
      out.push_back(step(*current, guidance, bc, env, cfg));
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("prediction step {}: {}", s, e.what()));
    }
    current = &out.back();
  }
  return out;
}

double vehicles_on_network(const LaneSegmentState& state, const ScenarioConfig& cfg) {
  double total = 0.0;
  for (std::size_t i = 0; i < state.segments(); ++i) {
    for (std::size_t j = 0; j < state.lanes(); ++j) {
      total += state.density_vpkm(i, j) * cfg.segments[i].length_km();
    }
  }
  return total;
}

void write_trajectory_csv(std::ostream& out, const std::vector<LaneSegmentState>& trajectory, int cycle,
                          bool header) {
  if (header) out << "cycle,lambda,i,j,k,v,q\n";
  for (const auto& s : trajectory) {
    for (std::size_t i = 0; i < s.segments(); ++i) {
      for (std::size_t j = 0; j < s.lanes(); ++j) {
        out << fmt::format("{},{},{},{},{},{},{}\n", cycle, s.step, i, j, s.density_vpkm(i, j), s.speed_kmh(i, j),
                           s.flow_vph(i, j));
      }
    }
  }
}

}  // namespace rainvsl::metanet
