#include "rainvsl/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

#include "rainvsl/errors.hpp"
#include "rainvsl/units.hpp"

namespace rainvsl {

// ---------------------------------------------------------------------------
// Domain helpers

double rainfall_at(const RainfallSchedule& schedule, std::size_t segment, double t) {
  for (const auto& iv : schedule.intervals) {
    if (t >= iv.start_s && t < iv.end_s) {
      if (segment >= iv.intensity_mmh.size()) {
        throw RangeError("rainfall lookup: segment " + std::to_string(segment) + " not in schedule");
      }
      return iv.intensity_mmh[segment];
    }
  }
  throw RangeError("rainfall lookup: t = " + std::to_string(t) + " s outside the covered horizon");
}

namespace {

bool is_integer_multiple(double big, double small) {
  if (small <= 0.0) return false;
  const double ratio = big / small;
  return std::abs(ratio - std::round(ratio)) < 1e-9 && std::round(ratio) >= 1.0;
}

}  // namespace

int TimeGrid::steps_per_cycle() const {
  return static_cast<int>(std::lround(control_period_s / prediction_step_s));
}

int TimeGrid::cycles() const { return static_cast<int>(std::lround(horizon_s / control_period_s)); }

int TimeGrid::sim_steps_per_cycle() const {
  return static_cast<int>(std::lround(control_period_s / sim_step_s));
}

std::size_t ScenarioConfig::ramp_segment() const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].has_off_ramp()) return i;
  }
  throw ValidationError("segments", "no segment carries an off-ramp");
}

const RampGeometry& ScenarioConfig::ramp() const { return *segments[ramp_segment()].ramp; }

double ScenarioConfig::road_length_m() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.length_m;
  return total;
}

std::string_view to_string(RainCapModel model) {
  switch (model) {
    case RainCapModel::none: return "none";
    case RainCapModel::speed_density: return "speed_density";
    case RainCapModel::sight_distance: return "sight_distance";
  }
  return "none";
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError(field, what);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void validate(const ScenarioConfig& cfg) {
  require(!cfg.segments.empty(), "segments", "segment list is empty");

  const std::size_t lanes = cfg.segments.front().lane_count();
  std::size_t ramps = 0;
  std::set<int> ids;
  for (std::size_t i = 0; i < cfg.segments.size(); ++i) {
    const auto& s = cfg.segments[i];
    const std::string f = "segments[" + std::to_string(i) + "]";
    require(ids.insert(s.id).second, f + ".id", "duplicate segment id " + std::to_string(s.id));
    require(finite(s.length_m) && s.length_m > 0.0, f + ".length_m", "must be > 0");
    require(finite(s.legal_limit_kmh) && s.legal_limit_kmh > 0.0, f + ".legal_limit_kmh", "must be > 0");
    require(s.lane_count() >= 1, f + ".lanes", "at least one lane required");
    require(s.lane_count() == lanes, f + ".lanes", "every segment must have the same lane count");
    for (std::size_t j = 0; j < s.lanes.size(); ++j) {
      const auto& l = s.lanes[j];
      const std::string lf = f + ".lanes[" + std::to_string(j) + "]";
      require(finite(l.free_flow_speed_kmh) && l.free_flow_speed_kmh > 0.0, lf + ".free_flow_speed_kmh", "must be > 0");
      require(finite(l.critical_density_vpkm) && l.critical_density_vpkm > 0.0, lf + ".critical_density_vpkm", "must be > 0");
      require(finite(l.capacity_vph) && l.capacity_vph >= 0.0, lf + ".capacity_vph", "must be >= 0");
    }
    if (s.ramp) {
      ++ramps;
      const auto& r = *s.ramp;
      require(r.curve_radius_m > 0.0, f + ".ramp.curve_radius_m", "must be > 0");
      require(r.slope_length_m > 0.0, f + ".ramp.slope_length_m", "must be > 0");
      require(r.gradient_pct > 0.0, f + ".ramp.gradient_pct", "must be > 0 (water-film fit is singular at 0)");
      require(r.texture_depth_mm > 0.0, f + ".ramp.texture_depth_mm", "must be > 0");
      require(r.legal_limit_kmh > 0.0, f + ".ramp.legal_limit_kmh", "must be > 0");
    }
  }
  require(ramps == 1, "segments", "exactly one segment must carry an off-ramp (found " + std::to_string(ramps) + ")");
  require(cfg.segments.back().has_off_ramp(), "segments", "the off-ramp must sit on the most downstream segment");

  require(cfg.pavement.slope_length_m > 0.0, "pavement.slope_length_m", "must be > 0");
  require(cfg.pavement.gradient_pct > 0.0, "pavement.gradient_pct", "must be > 0");
  require(cfg.pavement.texture_depth_mm > 0.0, "pavement.texture_depth_mm", "must be > 0");

  const auto& tg = cfg.time;
  require(tg.sim_step_s > 0.0, "time.sim_step_s", "must be > 0");
  require(is_integer_multiple(tg.prediction_step_s, tg.sim_step_s), "time.prediction_step_s",
          "must be an integer multiple of sim_step_s");
  require(is_integer_multiple(tg.control_period_s, tg.prediction_step_s), "time.control_period_s",
          "must be an integer multiple of prediction_step_s");
  require(is_integer_multiple(tg.horizon_s, tg.control_period_s), "time.horizon_s",
          "must be an integer multiple of control_period_s");

  // Rainfall: sorted, contiguous, non-overlapping, covering [0, horizon).
  const auto& ivs = cfg.rainfall.intervals;
  require(!ivs.empty(), "rainfall.intervals", "uncovered interval [0, " + std::to_string(tg.horizon_s) + ")");
  double cursor = 0.0;
  for (std::size_t k = 0; k < ivs.size(); ++k) {
    const auto& iv = ivs[k];
    const std::string f = "rainfall.intervals[" + std::to_string(k) + "]";
    require(iv.end_s > iv.start_s, f, "end_s must exceed start_s");
    require(iv.start_s <= cursor, f, "uncovered interval [" + std::to_string(cursor) + ", " + std::to_string(iv.start_s) + ")");
    require(iv.start_s >= cursor, f, "overlaps the previous interval");
    require(iv.intensity_mmh.size() == cfg.segments.size(), f + ".intensity",
            "needs one value per segment");
    for (double d : iv.intensity_mmh) require(finite(d) && d >= 0.0, f + ".intensity", "must be >= 0");
    cursor = iv.end_s;
  }
  require(cursor >= tg.horizon_s, "rainfall.intervals",
          "uncovered interval [" + std::to_string(cursor) + ", " + std::to_string(tg.horizon_s) + ")");

  require(cfg.demand.inflow_vph.size() == lanes, "demand.inflow_vph", "needs one value per lane");
  for (double q : cfg.demand.inflow_vph) require(finite(q) && q >= 0.0, "demand.inflow_vph", "must be >= 0");
  for (double q : cfg.demand.inflow_vph) {
    require(q * tg.sim_step_s / kSecondsPerHour <= 1.0, "demand.inflow_vph",
            "more than one arrival per lane per simulation step");
  }
  require(cfg.demand.exit_fraction >= 0.0 && cfg.demand.exit_fraction <= 1.0, "demand.exit_fraction", "must be in [0, 1]");

  const auto& mp = cfg.metanet;
  require(mp.tau_s > 0.0, "metanet.tau_s", "must be > 0");
  require(mp.kappa_vpkm > 0.0, "metanet.kappa_vpkm", "must be > 0");
  require(mp.omega > 0.0 && mp.omega <= 1.0, "metanet.omega", "must be in (0, 1]");
  require(mp.fd_exponent > 0.0, "metanet.fd_exponent", "must be > 0");
  require(mp.rain_exponent >= 1.3 && mp.rain_exponent <= 2.0, "metanet.rain_exponent", "must be in [1.3, 2]");
  require(mp.guided_critical_density_vpkm > 0.0, "metanet.guided_critical_density_vpkm", "must be > 0");
  require(mp.gamma_margin >= 0.0, "metanet.gamma_margin", "must be >= 0");
  require(mp.rain_cap_max_kmh > 0.0, "metanet.rain_cap_max_kmh", "must be > 0");

  const auto& rp = cfg.rain_speed_density;
  require(finite(rp.a) && finite(rp.b) && finite(rp.c), "rain_speed_density", "parameters must be finite");

  const auto& w = cfg.weights;
  require(w.ttt >= 0.0, "weights.ttt", "must be >= 0");
  require(w.ttd >= 0.0, "weights.ttd", "must be >= 0");
  require(w.sd >= 0.0, "weights.sd", "must be >= 0");

  const auto& sp = cfg.safety;
  require(sp.reaction_time_s >= 0.0, "safety.reaction_time_s", "must be >= 0");
  require(sp.safety_gap_m >= 0.0, "safety.safety_gap_m", "must be >= 0");
  require(sp.max_deceleration_ms2 > 0.0, "safety.max_deceleration_ms2", "must be > 0");
  require(sp.adhesion_floor > 0.0 && sp.adhesion_floor <= 0.8256, "safety.adhesion_floor", "must be in (0, 0.8256]");
  require(sp.clear_visibility_m > sp.safety_gap_m, "safety.clear_visibility_m", "must exceed the safety gap");

  const auto& cp = cfg.control;
  require(cp.compliance >= 0.0 && cp.compliance <= 1.0, "control.compliance", "must be in [0, 1]");
  require(cp.speed_step_kmh > 0.0, "control.speed_step_kmh", "must be > 0");
  require(cp.min_guidance_kmh >= 0.0, "control.min_guidance_kmh", "must be >= 0");
  require(cp.deceleration_step_ms2 > 0.0, "control.deceleration_step_ms2", "must be > 0");
  require(cp.adjacent_band_kmh > 0.0, "control.adjacent_band_kmh", "must be > 0");
  require(cp.cycle_band_kmh > 0.0, "control.cycle_band_kmh", "must be > 0");
  require(cp.max_passes >= 1, "control.max_passes", "must be >= 1");

  const auto& ms = cfg.microsim;
  require(ms.cell_m > 0.0, "microsim.cell_m", "must be > 0");
  require(ms.vehicle_cells >= 1, "microsim.vehicle_cells", "must be >= 1");
  require(ms.p_slow >= 0.0 && ms.p_slow <= 1.0, "microsim.p_slow", "must be in [0, 1]");
  require(ms.exit_speed_tolerance_kmh >= 0.0, "microsim.exit_speed_tolerance_kmh", "must be >= 0");
  for (double s : ms.station_offsets_m) {
    require(s >= 0.0 && s < cfg.segments.back().length_m, "microsim.station_offsets_m",
            "stations must lie on the ramp segment");
  }
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

int line_of(const YAML::Node& n) {
  const auto mark = n.Mark();
  return mark.line >= 0 ? mark.line + 1 : 0;
}

std::string join(std::string_view path, std::string_view key) {
  if (path.empty()) return std::string(key);
  return std::string(path) + "." + std::string(key);
}

void expect_map(const YAML::Node& n, const std::string& path) {
  if (!n.IsMap()) throw SchemaError(path, line_of(n), "expected a mapping");
}

void expect_keys(const YAML::Node& n, const std::string& path, std::initializer_list<std::string_view> allowed) {
  expect_map(n, path);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw SchemaError(join(path, key), line_of(kv.first), "unknown key");
    }
  }
}

template <typename T>
T scalar_as(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) throw SchemaError(field, line_of(n), "expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw SchemaError(field, line_of(n), "cannot convert '" + n.Scalar() + "'");
  }
}

template <typename T>
void read_opt(const YAML::Node& map, const std::string& path, const char* key, T& out) {
  if (const auto n = map[key]) out = scalar_as<T>(n, join(path, key));
}

template <typename T>
T read_req(const YAML::Node& map, const std::string& path, const char* key) {
  const auto n = map[key];
  if (!n) throw SchemaError(join(path, key), line_of(map), "missing required key");
  return scalar_as<T>(n, join(path, key));
}

std::vector<double> read_doubles(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence()) throw SchemaError(field, line_of(n), "expected a sequence");
  std::vector<double> out;
  out.reserve(n.size());
  for (std::size_t k = 0; k < n.size(); ++k) {
    out.push_back(scalar_as<double>(n[k], field + "[" + std::to_string(k) + "]"));
  }
  return out;
}

YAML::Node require_node(const YAML::Node& map, const std::string& path, const char* key) {
  const auto n = map[key];
  if (!n) throw SchemaError(join(path, key), line_of(map), "missing required section");
  return n;
}

RampGeometry parse_ramp(const YAML::Node& n, const std::string& path) {
  expect_keys(n, path, {"curve_radius_m", "slope_length_m", "gradient_pct", "texture_depth_mm",
                        "superelevation_deg", "legal_limit_kmh"});
  RampGeometry r;
  r.curve_radius_m = read_req<double>(n, path, "curve_radius_m");
  r.slope_length_m = read_req<double>(n, path, "slope_length_m");
  r.gradient_pct = read_req<double>(n, path, "gradient_pct");
  r.texture_depth_mm = read_req<double>(n, path, "texture_depth_mm");
  read_opt(n, path, "superelevation_deg", r.superelevation_deg);
  r.legal_limit_kmh = read_req<double>(n, path, "legal_limit_kmh");
  return r;
}

SegmentGeometry parse_segment(const YAML::Node& n, const std::string& path) {
  expect_keys(n, path, {"id", "length_m", "legal_limit_kmh", "lanes", "ramp"});
  SegmentGeometry s;
  s.id = read_req<int>(n, path, "id");
  s.length_m = read_req<double>(n, path, "length_m");
  s.legal_limit_kmh = read_req<double>(n, path, "legal_limit_kmh");
  const auto lanes = require_node(n, path, "lanes");
  if (!lanes.IsSequence()) throw SchemaError(join(path, "lanes"), line_of(lanes), "expected a sequence");
  for (std::size_t j = 0; j < lanes.size(); ++j) {
    const std::string lp = join(path, "lanes[" + std::to_string(j) + "]");
    expect_keys(lanes[j], lp, {"free_flow_speed_kmh", "critical_density_vpkm", "capacity_vph"});
    LaneParams l;
    l.free_flow_speed_kmh = read_req<double>(lanes[j], lp, "free_flow_speed_kmh");
    l.critical_density_vpkm = read_req<double>(lanes[j], lp, "critical_density_vpkm");
    read_opt(lanes[j], lp, "capacity_vph", l.capacity_vph);
    s.lanes.push_back(l);
  }
  if (const auto r = n["ramp"]) s.ramp = parse_ramp(r, join(path, "ramp"));
  return s;
}

RainCapModel parse_rain_cap(const YAML::Node& n, const std::string& field) {
  const auto v = scalar_as<std::string>(n, field);
  if (v == "none") return RainCapModel::none;
  if (v == "speed_density") return RainCapModel::speed_density;
  if (v == "sight_distance") return RainCapModel::sight_distance;
  throw SchemaError(field, line_of(n), "expected one of none|speed_density|sight_distance, got '" + v + "'");
}

double rain_unit_factor(const YAML::Node& n, const std::string& field) {
  const auto u = scalar_as<std::string>(n, field);
  if (u == "mm/h") return 1.0;
  if (u == "mm/min") return mmmin_to_mmh(1.0);
  throw SchemaError(field, line_of(n), "expected mm/h or mm/min, got '" + u + "'");
}

ScenarioConfig parse_document(const YAML::Node& root) {
  expect_keys(root, "", {"name", "seed", "time", "segments", "pavement", "rainfall", "demand", "metanet",
                         "rain_speed_density", "weights", "safety", "control", "microsim"});
  ScenarioConfig cfg;
  read_opt(root, "", "name", cfg.name);
  read_opt(root, "", "seed", cfg.seed);

  {
    const auto t = require_node(root, "", "time");
    expect_keys(t, "time", {"sim_step_s", "prediction_step_s", "control_period_s", "horizon_s"});
    read_opt(t, "time", "sim_step_s", cfg.time.sim_step_s);
    read_opt(t, "time", "prediction_step_s", cfg.time.prediction_step_s);
    read_opt(t, "time", "control_period_s", cfg.time.control_period_s);
    read_opt(t, "time", "horizon_s", cfg.time.horizon_s);
  }
  {
    const auto segs = require_node(root, "", "segments");
    if (!segs.IsSequence()) throw SchemaError("segments", line_of(segs), "expected a sequence");
    for (std::size_t i = 0; i < segs.size(); ++i) {
      cfg.segments.push_back(parse_segment(segs[i], "segments[" + std::to_string(i) + "]"));
    }
  }
  if (const auto p = root["pavement"]) {
    expect_keys(p, "pavement", {"slope_length_m", "gradient_pct", "texture_depth_mm"});
    read_opt(p, "pavement", "slope_length_m", cfg.pavement.slope_length_m);
    read_opt(p, "pavement", "gradient_pct", cfg.pavement.gradient_pct);
    read_opt(p, "pavement", "texture_depth_mm", cfg.pavement.texture_depth_mm);
  } else {
    throw SchemaError("pavement", line_of(root), "missing required section");
  }
  {
    const auto r = require_node(root, "", "rainfall");
    expect_keys(r, "rainfall", {"unit", "intervals"});
    double factor = 1.0;
    if (const auto u = r["unit"]) factor = rain_unit_factor(u, "rainfall.unit");
    const auto ivs = require_node(r, "rainfall", "intervals");
    if (!ivs.IsSequence()) throw SchemaError("rainfall.intervals", line_of(ivs), "expected a sequence");
    for (std::size_t k = 0; k < ivs.size(); ++k) {
      const std::string ip = "rainfall.intervals[" + std::to_string(k) + "]";
      expect_keys(ivs[k], ip, {"start_s", "end_s", "intensity"});
      RainInterval iv;
      iv.start_s = read_req<double>(ivs[k], ip, "start_s");
      iv.end_s = read_req<double>(ivs[k], ip, "end_s");
      iv.intensity_mmh = read_doubles(require_node(ivs[k], ip, "intensity"), ip + ".intensity");
      for (double& d : iv.intensity_mmh) d *= factor;
      cfg.rainfall.intervals.push_back(std::move(iv));
    }
  }
  {
    const auto d = require_node(root, "", "demand");
    expect_keys(d, "demand", {"inflow_vph", "exit_fraction"});
    cfg.demand.inflow_vph = read_doubles(require_node(d, "demand", "inflow_vph"), "demand.inflow_vph");
    read_opt(d, "demand", "exit_fraction", cfg.demand.exit_fraction);
  }
  if (const auto m = root["metanet"]) {
    expect_keys(m, "metanet", {"tau_s", "kappa_vpkm", "omega", "fd_exponent", "rain_exponent",
                               "guided_critical_density_vpkm", "gamma_margin", "rain_speed_cap",
                               "rain_cap_max_kmh"});
    auto& mp = cfg.metanet;
    read_opt(m, "metanet", "tau_s", mp.tau_s);
    read_opt(m, "metanet", "kappa_vpkm", mp.kappa_vpkm);
    read_opt(m, "metanet", "omega", mp.omega);
    read_opt(m, "metanet", "fd_exponent", mp.fd_exponent);
    read_opt(m, "metanet", "rain_exponent", mp.rain_exponent);
    read_opt(m, "metanet", "guided_critical_density_vpkm", mp.guided_critical_density_vpkm);
    read_opt(m, "metanet", "gamma_margin", mp.gamma_margin);
    if (const auto rc = m["rain_speed_cap"]) mp.rain_cap = parse_rain_cap(rc, "metanet.rain_speed_cap");
    read_opt(m, "metanet", "rain_cap_max_kmh", mp.rain_cap_max_kmh);
  }
  if (const auto r = root["rain_speed_density"]) {
    expect_keys(r, "rain_speed_density", {"A", "B", "C"});
    read_opt(r, "rain_speed_density", "A", cfg.rain_speed_density.a);
    read_opt(r, "rain_speed_density", "B", cfg.rain_speed_density.b);
    read_opt(r, "rain_speed_density", "C", cfg.rain_speed_density.c);
  }
  if (const auto w = root["weights"]) {
    expect_keys(w, "weights", {"ttt", "ttd", "sd"});
    read_opt(w, "weights", "ttt", cfg.weights.ttt);
    read_opt(w, "weights", "ttd", cfg.weights.ttd);
    read_opt(w, "weights", "sd", cfg.weights.sd);
  }
  if (const auto s = root["safety"]) {
    expect_keys(s, "safety", {"reaction_time_s", "safety_gap_m", "max_deceleration_ms2", "adhesion_floor",
                              "clear_visibility_m"});
    read_opt(s, "safety", "reaction_time_s", cfg.safety.reaction_time_s);
    read_opt(s, "safety", "safety_gap_m", cfg.safety.safety_gap_m);
    read_opt(s, "safety", "max_deceleration_ms2", cfg.safety.max_deceleration_ms2);
    read_opt(s, "safety", "adhesion_floor", cfg.safety.adhesion_floor);
    read_opt(s, "safety", "clear_visibility_m", cfg.safety.clear_visibility_m);
  }
  if (const auto c = root["control"]) {
    expect_keys(c, "control", {"compliance", "speed_step_kmh", "min_guidance_kmh", "deceleration_step_ms2",
                               "adjacent_band_kmh", "cycle_band_kmh", "max_passes"});
    auto& cp = cfg.control;
    read_opt(c, "control", "compliance", cp.compliance);
    read_opt(c, "control", "speed_step_kmh", cp.speed_step_kmh);
    read_opt(c, "control", "min_guidance_kmh", cp.min_guidance_kmh);
    read_opt(c, "control", "deceleration_step_ms2", cp.deceleration_step_ms2);
    read_opt(c, "control", "adjacent_band_kmh", cp.adjacent_band_kmh);
    read_opt(c, "control", "cycle_band_kmh", cp.cycle_band_kmh);
    read_opt(c, "control", "max_passes", cp.max_passes);
  }
  if (const auto m = root["microsim"]) {
    expect_keys(m, "microsim", {"cell_m", "vehicle_cells", "p_slow", "exit_speed_tolerance_kmh", "lane_changes",
                                "station_offsets_m"});
    auto& ms = cfg.microsim;
    read_opt(m, "microsim", "cell_m", ms.cell_m);
    read_opt(m, "microsim", "vehicle_cells", ms.vehicle_cells);
    read_opt(m, "microsim", "p_slow", ms.p_slow);
    read_opt(m, "microsim", "exit_speed_tolerance_kmh", ms.exit_speed_tolerance_kmh);
    read_opt(m, "microsim", "lane_changes", ms.lane_changes);
    if (const auto st = m["station_offsets_m"]) ms.station_offsets_m = read_doubles(st, "microsim.station_offsets_m");
  }
  return cfg;
}

}  // namespace

ScenarioConfig parse_scenario(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw SchemaError("", e.mark.line + 1, e.msg);
  }
  if (!root || root.IsNull()) throw SchemaError("", 0, "empty document");
  auto cfg = parse_document(root);
  validate(cfg);
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_scenario(const ScenarioConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(std::numeric_limits<double>::max_digits10);
  out.SetFloatPrecision(std::numeric_limits<double>::max_digits10);

  auto flow_doubles = [&](const std::vector<double>& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (double x : v) out << x;
    out << YAML::EndSeq;
  };

  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << cfg.name;
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;

  out << YAML::Key << "time" << YAML::Value << YAML::BeginMap
      << YAML::Key << "sim_step_s" << YAML::Value << cfg.time.sim_step_s
      << YAML::Key << "prediction_step_s" << YAML::Value << cfg.time.prediction_step_s
      << YAML::Key << "control_period_s" << YAML::Value << cfg.time.control_period_s
      << YAML::Key << "horizon_s" << YAML::Value << cfg.time.horizon_s << YAML::EndMap;

  out << YAML::Key << "segments" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : cfg.segments) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << s.id;
    out << YAML::Key << "length_m" << YAML::Value << s.length_m;
    out << YAML::Key << "legal_limit_kmh" << YAML::Value << s.legal_limit_kmh;
    out << YAML::Key << "lanes" << YAML::Value << YAML::BeginSeq;
    for (const auto& l : s.lanes) {
      out << YAML::Flow << YAML::BeginMap
          << YAML::Key << "free_flow_speed_kmh" << YAML::Value << l.free_flow_speed_kmh
          << YAML::Key << "critical_density_vpkm" << YAML::Value << l.critical_density_vpkm
          << YAML::Key << "capacity_vph" << YAML::Value << l.capacity_vph << YAML::EndMap;
    }
    out << YAML::EndSeq;
    if (s.ramp) {
      const auto& r = *s.ramp;
      out << YAML::Key << "ramp" << YAML::Value << YAML::BeginMap
          << YAML::Key << "curve_radius_m" << YAML::Value << r.curve_radius_m
          << YAML::Key << "slope_length_m" << YAML::Value << r.slope_length_m
          << YAML::Key << "gradient_pct" << YAML::Value << r.gradient_pct
          << YAML::Key << "texture_depth_mm" << YAML::Value << r.texture_depth_mm
          << YAML::Key << "superelevation_deg" << YAML::Value << r.superelevation_deg
          << YAML::Key << "legal_limit_kmh" << YAML::Value << r.legal_limit_kmh << YAML::EndMap;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "pavement" << YAML::Value << YAML::BeginMap
      << YAML::Key << "slope_length_m" << YAML::Value << cfg.pavement.slope_length_m
      << YAML::Key << "gradient_pct" << YAML::Value << cfg.pavement.gradient_pct
      << YAML::Key << "texture_depth_mm" << YAML::Value << cfg.pavement.texture_depth_mm << YAML::EndMap;

  out << YAML::Key << "rainfall" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "unit" << YAML::Value << "mm/h";
  out << YAML::Key << "intervals" << YAML::Value << YAML::BeginSeq;
  for (const auto& iv : cfg.rainfall.intervals) {
    out << YAML::BeginMap << YAML::Key << "start_s" << YAML::Value << iv.start_s
        << YAML::Key << "end_s" << YAML::Value << iv.end_s << YAML::Key << "intensity" << YAML::Value;
    flow_doubles(iv.intensity_mmh);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "demand" << YAML::Value << YAML::BeginMap << YAML::Key << "inflow_vph" << YAML::Value;
  flow_doubles(cfg.demand.inflow_vph);
  out << YAML::Key << "exit_fraction" << YAML::Value << cfg.demand.exit_fraction << YAML::EndMap;

  const auto& mp = cfg.metanet;
  out << YAML::Key << "metanet" << YAML::Value << YAML::BeginMap
      << YAML::Key << "tau_s" << YAML::Value << mp.tau_s
      << YAML::Key << "kappa_vpkm" << YAML::Value << mp.kappa_vpkm
      << YAML::Key << "omega" << YAML::Value << mp.omega
      << YAML::Key << "fd_exponent" << YAML::Value << mp.fd_exponent
      << YAML::Key << "rain_exponent" << YAML::Value << mp.rain_exponent
      << YAML::Key << "guided_critical_density_vpkm" << YAML::Value << mp.guided_critical_density_vpkm
      << YAML::Key << "gamma_margin" << YAML::Value << mp.gamma_margin
      << YAML::Key << "rain_speed_cap" << YAML::Value << std::string(to_string(mp.rain_cap))
      << YAML::Key << "rain_cap_max_kmh" << YAML::Value << mp.rain_cap_max_kmh << YAML::EndMap;

  out << YAML::Key << "rain_speed_density" << YAML::Value << YAML::BeginMap
      << YAML::Key << "A" << YAML::Value << cfg.rain_speed_density.a
      << YAML::Key << "B" << YAML::Value << cfg.rain_speed_density.b
      << YAML::Key << "C" << YAML::Value << cfg.rain_speed_density.c << YAML::EndMap;

  out << YAML::Key << "weights" << YAML::Value << YAML::BeginMap
      << YAML::Key << "ttt" << YAML::Value << cfg.weights.ttt
      << YAML::Key << "ttd" << YAML::Value << cfg.weights.ttd
      << YAML::Key << "sd" << YAML::Value << cfg.weights.sd << YAML::EndMap;

  const auto& sp = cfg.safety;
  out << YAML::Key << "safety" << YAML::Value << YAML::BeginMap
      << YAML::Key << "reaction_time_s" << YAML::Value << sp.reaction_time_s
      << YAML::Key << "safety_gap_m" << YAML::Value << sp.safety_gap_m
      << YAML::Key << "max_deceleration_ms2" << YAML::Value << sp.max_deceleration_ms2
      << YAML::Key << "adhesion_floor" << YAML::Value << sp.adhesion_floor
      << YAML::Key << "clear_visibility_m" << YAML::Value << sp.clear_visibility_m << YAML::EndMap;

  const auto& cp = cfg.control;
  out << YAML::Key << "control" << YAML::Value << YAML::BeginMap
      << YAML::Key << "compliance" << YAML::Value << cp.compliance
      << YAML::Key << "speed_step_kmh" << YAML::Value << cp.speed_step_kmh
      << YAML::Key << "min_guidance_kmh" << YAML::Value << cp.min_guidance_kmh
      << YAML::Key << "deceleration_step_ms2" << YAML::Value << cp.deceleration_step_ms2
      << YAML::Key << "adjacent_band_kmh" << YAML::Value << cp.adjacent_band_kmh
      << YAML::Key << "cycle_band_kmh" << YAML::Value << cp.cycle_band_kmh
      << YAML::Key << "max_passes" << YAML::Value << cp.max_passes << YAML::EndMap;

  const auto& ms = cfg.microsim;
  out << YAML::Key << "microsim" << YAML::Value << YAML::BeginMap
      << YAML::Key << "cell_m" << YAML::Value << ms.cell_m
      << YAML::Key << "vehicle_cells" << YAML::Value << ms.vehicle_cells
      << YAML::Key << "p_slow" << YAML::Value << ms.p_slow
      << YAML::Key << "exit_speed_tolerance_kmh" << YAML::Value << ms.exit_speed_tolerance_kmh
      << YAML::Key << "lane_changes" << YAML::Value << ms.lane_changes
      << YAML::Key << "station_offsets_m" << YAML::Value;
  flow_doubles(ms.station_offsets_m);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::uint64_t config_hash(const ScenarioConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_scenario(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rainvsl
