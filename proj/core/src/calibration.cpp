#include "rainvsl/calibration.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "rainvsl/csv.hpp"
#include "rainvsl/errors.hpp"

namespace rainvsl::calibration {

DetectorDataset read_detector_csv(std::istream& in) {
  const csv::Table t = csv::read(in);
  const std::vector<std::string> base{"timestamp", "segment", "lane", "q", "k", "v"};
  DetectorDataset data;
  auto with_vis = base;
  with_vis.emplace_back("visibility");
  if (t.header == with_vis) {
    data.has_visibility = true;
  } else if (t.header != base) {
    throw ValidationError("header", "expected 'timestamp,segment,lane,q,k,v[,visibility]'");
  }
  const std::size_t width = t.header.size();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    const int line = t.line_numbers[r];
    if (f.size() != width) {
      throw ValidationError("row", fmt::format("line {}: expected {} fields, got {}", line, width, f.size()));
    }
    DetectorRow row;
    row.timestamp = f[0];
    const double seg = csv::parse_number(f[1], "segment", line);
    const double lane = csv::parse_number(f[2], "lane", line);
    if (seg != std::floor(seg) || lane != std::floor(lane)) {
      throw ValidationError("segment", fmt::format("line {}: segment and lane must be integers", line));
    }
    row.segment = static_cast<int>(seg);
    row.lane = static_cast<int>(lane);
    row.flow_vph = csv::parse_number(f[3], "q", line);
    row.density_vpkm = csv::parse_number(f[4], "k", line);
    row.speed_kmh = csv::parse_number(f[5], "v", line);
    if (data.has_visibility && !f[6].empty()) row.visibility_m = csv::parse_number(f[6], "visibility", line);
    if (row.flow_vph < 0.0 || row.density_vpkm < 0.0 || row.speed_kmh < 0.0 ||
        (row.visibility_m && *row.visibility_m < 0.0)) {
      throw ValidationError("row", fmt::format("line {}: negative value", line));
    }
    data.rows.push_back(std::move(row));
  }
  return data;
}

DetectorDataset load_detector_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detector file " + path.string());
  return read_detector_csv(in);
}

std::vector<std::size_t> inconsistent_rows(const DetectorDataset& data, double tolerance) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    const auto& row = data.rows[r];
    const double kv = row.density_vpkm * row.speed_kmh;
    const double scale = std::max(std::abs(row.flow_vph), std::abs(kv));
    if (scale > 0.0 && std::abs(row.flow_vph - kv) > tolerance * scale) out.push_back(r);
  }
  return out;
}

namespace {

struct FdModel {
  double vf, kc, a;

  double operator()(double k) const { return vf * std::exp(-std::pow(k / kc, a) / a); }
};

// Residuals and Jacobian with respect to (ln v_f, ln k_c, ln a).
double residuals(const std::vector<std::pair<double, double>>& kv, const FdModel& m, Eigen::VectorXd& r,
                 Eigen::MatrixXd* jac) {
  const auto n = static_cast<Eigen::Index>(kv.size());
  r.resize(n);
  if (jac != nullptr) jac->resize(n, 3);
  double cost = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = kv[static_cast<std::size_t>(i)].first;
    const double u = k > 0.0 ? std::pow(k / m.kc, m.a) : 0.0;
    const double e = std::exp(-u / m.a);
    const double model = m.vf * e;
    r(i) = kv[static_cast<std::size_t>(i)].second - model;
    cost += r(i) * r(i);
    if (jac != nullptr) {
      const double dvf = e;
      const double dkc = m.vf * e * u / m.kc;
      const double da = k > 0.0 ? -m.vf * e * u * (m.a * std::log(k / m.kc) - 1.0) / (m.a * m.a) : 0.0;
      // Residual derivative is the negative model derivative; chain rule for log parameters.
      (*jac)(i, 0) = -dvf * m.vf;
      (*jac)(i, 1) = -dkc * m.kc;
      (*jac)(i, 2) = -da * m.a;
    }
  }
  return cost;
}

FdModel levenberg_marquardt(const std::vector<std::pair<double, double>>& kv, FdModel m, double& cost) {
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  cost = residuals(kv, m, r, &jac);
  double lambda = 1e-3;
  for (int it = 0; it < 500; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    Eigen::MatrixXd a = jtj;
    a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
    const Eigen::VectorXd step = a.ldlt().solve(-g);
    if (!step.allFinite()) break;
    FdModel trial{m.vf * std::exp(step(0)), m.kc * std::exp(step(1)), m.a * std::exp(step(2))};
    Eigen::VectorXd r2;
    const double c2 = residuals(kv, trial, r2, nullptr);
    if (std::isfinite(c2) && c2 < cost) {
      const double gain = cost - c2;
      m = trial;
      cost = residuals(kv, m, r, &jac);
      lambda = std::max(lambda / 10.0, 1e-12);
      if (step.norm() < 1e-12 || gain <= 1e-15 * std::max(1.0, cost)) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  return m;
}

}  // namespace

FundamentalDiagramFit fit_fundamental_diagram(const std::vector<std::pair<double, double>>& density_speed) {
  if (density_speed.size() < kMinFdRows) {
    throw CalibrationError(fmt::format("fundamental diagram fit needs at least {} rows, got {}", kMinFdRows,
                                       density_speed.size()));
  }
  double kmin = density_speed.front().first;
  double kmax = kmin;
  double vmax = 0.0;
  for (const auto& [k, v] : density_speed) {
    kmin = std::min(kmin, k);
    kmax = std::max(kmax, k);
    vmax = std::max(vmax, v);
  }
  if (!(kmax - kmin > 0.05 * std::max(kmax, 1.0)) || !(vmax > 0.0)) {
    throw CalibrationError(fmt::format("degenerate density range [{}, {}] veh/km", kmin, kmax));
  }

  // Knee guess: the observation closest to 60% of the top speed.
  double kc0 = 0.5 * (kmin + kmax);
  double best_gap = 1e300;
  for (const auto& [k, v] : density_speed) {
    const double gap = std::abs(v - 0.6 * vmax);
    if (k > 0.0 && gap < best_gap) {
      best_gap = gap;
      kc0 = k;
    }
  }

  FundamentalDiagramFit best;
  double best_cost = 1e300;
  for (double a0 : {1.2, 1.6, 2.0, 2.4}) {
    double cost = 0.0;
    const FdModel m = levenberg_marquardt(density_speed, FdModel{vmax, kc0, a0}, cost);
    if (cost < best_cost) {
      best_cost = cost;
      best.free_flow_speed_kmh = m.vf;
      best.critical_density_vpkm = m.kc;
      best.exponent = m.a;
    }
  }
  best.residual_rms = std::sqrt(best_cost / static_cast<double>(density_speed.size()));
  best.rows_used = density_speed.size();
  return best;
}

std::vector<FundamentalDiagramFit> fit_fundamental_diagrams(const DetectorDataset& data) {
  const auto bad = inconsistent_rows(data);
  if (!bad.empty()) spdlog::warn("calibration: excluding {} rows where q and k*v disagree by > 20%", bad.size());
  std::map<std::pair<int, int>, std::vector<std::pair<double, double>>> cells;
  std::size_t b = 0;
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    if (b < bad.size() && bad[b] == r) {
      ++b;
      continue;
    }
    const auto& row = data.rows[r];
    cells[{row.segment, row.lane}].emplace_back(row.density_vpkm, row.speed_kmh);
  }
  std::vector<FundamentalDiagramFit> out;
  for (const auto& [key, kv] : cells) {
    FundamentalDiagramFit fit;
    try {
      fit = fit_fundamental_diagram(kv);
    } catch (const CalibrationError& e) {
      throw CalibrationError(fmt::format("segment {}, lane {}: {}", key.first, key.second, e.what()));
    }
    fit.segment = key.first;
    fit.lane = key.second;
    out.push_back(fit);
  }
  if (out.empty()) throw CalibrationError("no usable rows");
  return out;
}

RainFit fit_rain_speed_density(const DetectorDataset& data) {
  const auto bad = inconsistent_rows(data);
  std::vector<std::size_t> use;
  std::size_t b = 0;
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    if (b < bad.size() && bad[b] == r) {
      ++b;
      continue;
    }
    if (!data.rows[r].visibility_m) continue;
    if (!(data.rows[r].speed_kmh > 0.0)) {
      throw CalibrationError(fmt::format("row {}: speed must be > 0 for the log-linear fit", r));
    }
    use.push_back(r);
  }
  if (!bad.empty()) spdlog::warn("calibration: excluding {} rows where q and k*v disagree by > 20%", bad.size());
  const auto n = static_cast<Eigen::Index>(use.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = data.rows[use[static_cast<std::size_t>(i)]];
    x(i, 0) = 1.0;
    x(i, 1) = row.density_vpkm;
    x(i, 2) = *row.visibility_m;
    y(i) = std::log(row.speed_kmh);
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (n < 3 || qr.rank() < 3) {
    throw CalibrationError(fmt::format("rain speed-density design is rank deficient ({} usable rows)", n));
  }
  const Eigen::VectorXd beta = qr.solve(y);
  RainFit fit;
  fit.params = RainSpeedDensityParams{std::exp(beta(0)), beta(1), beta(2)};
  fit.residual_rms = std::sqrt((x * beta - y).squaredNorm() / static_cast<double>(n));
  fit.rows_used = use.size();
  return fit;
}

std::string fd_fragment(const std::vector<FundamentalDiagramFit>& fits) {
  std::string out = "# fitted lane parameters (segment, lane as in the detector file)\nlane_fits:\n";
  for (const auto& f : fits) {
    out += fmt::format(
        "  - {{segment: {}, lane: {}, free_flow_speed_kmh: {}, critical_density_vpkm: {}, fd_exponent: {}, "
        "residual_rms: {}}}\n",
        f.segment, f.lane, f.free_flow_speed_kmh, f.critical_density_vpkm, f.exponent, f.residual_rms);
  }
  return out;
}

std::string rain_fragment(const RainFit& fit) {
  return fmt::format("rain_speed_density:\n  A: {}\n  B: {}\n  C: {}\n# residual_rms (ln v): {}\n", fit.params.a,
                     fit.params.b, fit.params.c, fit.residual_rms);
}

}  // namespace rainvsl::calibration
