#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rainvsl/domain.hpp"

namespace rainvsl {

struct DetectorRow {
  std::string timestamp;
  int segment = 0;
  int lane = 0;
  double flow_vph = 0.0;
  double density_vpkm = 0.0;
  double speed_kmh = 0.0;
  std::optional<double> visibility_m;
};

struct DetectorDataset {
  std::vector<DetectorRow> rows;
  bool has_visibility = false;
};

struct FundamentalDiagramFit {
  int segment = 0;
  int lane = 0;
  double free_flow_speed_kmh = 0.0;
  double critical_density_vpkm = 0.0;
  double exponent = 0.0;
  double residual_rms = 0.0;
  std::size_t rows_used = 0;
};

struct RainFit {
  RainSpeedDensityParams params;
  double residual_rms = 0.0;  // in ln(v)
  std::size_t rows_used = 0;
};

namespace calibration {

inline constexpr std::size_t kMinFdRows = 30;

/// Parses `timestamp,segment,lane,q,k,v[,visibility]`. Throws ValidationError
/// on a wrong header, unparsable numbers or negative values.
DetectorDataset read_detector_csv(std::istream& in);
DetectorDataset load_detector_csv(const std::filesystem::path& path);

/// Indices of rows where q and k v disagree by more than `tolerance` (relative).
std::vector<std::size_t> inconsistent_rows(const DetectorDataset& data, double tolerance = 0.2);

/// Nonlinear least squares of v = v_f exp(-(1/a)(k/k_c)^a) on (k, v) pairs,
/// Levenberg-Marquardt from several starting exponents.
/// Throws CalibrationError on too few rows or a degenerate density range.
FundamentalDiagramFit fit_fundamental_diagram(const std::vector<std::pair<double, double>>& density_speed);

/// One fit per (segment, lane) present in the data, skipping inconsistent rows.
std::vector<FundamentalDiagramFit> fit_fundamental_diagrams(const DetectorDataset& data);

/// Log-linear least squares ln v = ln A + B k + C L_v over rows with visibility.
/// Throws CalibrationError on v <= 0 (with row index) or a rank-deficient design.
RainFit fit_rain_speed_density(const DetectorDataset& data);

/// Scenario fragments mergeable into a scenario document.
std::string fd_fragment(const std::vector<FundamentalDiagramFit>& fits);
std::string rain_fragment(const RainFit& fit);

}  // namespace calibration
}  // namespace rainvsl
