#include <CLI11.hpp>
#include <json.hpp>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "rainvsl/calibration.hpp"
#include "rainvsl/controller.hpp"
#include "rainvsl/errors.hpp"
#include "rainvsl/microsim.hpp"
#include "rainvsl/safety.hpp"
#include "rainvsl/scenario.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rainvsl;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kIo = 3 };

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

json metrics_json(const MetricsReport& m) {
  json j;
  j["ttt_veh_h"] = m.ttt_veh_h;
  j["ttd_veh_km"] = m.ttd_veh_km;
  j["sd_per_lane"] = m.sd_per_lane;
  j["sd"] = m.sd;
  j["adherence"] = m.adherence;
  json st = json::array();
  for (const auto& s : m.station_adherence) {
    st.push_back({{"station_m", s.offset_m},
                  {"compliant_samples", s.compliant_samples},
                  {"noncompliant_samples", s.noncompliant_samples},
                  {"compliant", s.compliant},
                  {"noncompliant", s.noncompliant}});
  }
  j["station_adherence"] = st;
  j["segment_mean_speed_kmh"] = m.segment_mean_speed_kmh;
  j["counts"] = {{"spawned", m.spawned},
                 {"exited_mainline", m.exited_mainline},
                 {"exited_ramp", m.exited_ramp},
                 {"present", m.present},
                 {"queued", m.queued},
                 {"overspeed_exits", m.overspeed_exits},
                 {"lane_changes", m.lane_changes}};
  return j;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& m) {
  out << "metric,value\n";
  out << fmt::format("ttt_veh_h,{}\nttd_veh_km,{}\nsd,{}\n", m.ttt_veh_h, m.ttd_veh_km, m.sd);
  for (std::size_t j = 0; j < m.sd_per_lane.size(); ++j) out << fmt::format("sd_lane{},{}\n", j + 1, m.sd_per_lane[j]);
  out << fmt::format("adherence,{}\n", m.adherence);
  out << fmt::format("spawned,{}\nexited_mainline,{}\nexited_ramp,{}\npresent,{}\nqueued,{}\noverspeed_exits,{}\n",
                     m.spawned, m.exited_mainline, m.exited_ramp, m.present, m.queued, m.overspeed_exits);
}

void write_segment_speeds(std::ostream& out, const MetricsReport& m) {
  out << "cycle,segment,mean_speed_kmh\n";
  for (std::size_t c = 0; c < m.segment_mean_speed_kmh.size(); ++c) {
    for (std::size_t i = 0; i < m.segment_mean_speed_kmh[c].size(); ++i) {
      out << fmt::format("{},{},{}\n", c, i, m.segment_mean_speed_kmh[c][i]);
    }
  }
}

RunMode parse_mode(const std::string& s) { return s == "baseline" ? RunMode::baseline : RunMode::control; }

// ---- run -------------------------------------------------------------------

struct RunArgs {
  std::string scenario;
  std::string mode = "control";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
};

int cmd_run(const RunArgs& a) {
  const ScenarioConfig cfg = load_scenario(a.scenario);
  const std::uint64_t seed = a.seed.value_or(cfg.seed);
  const fs::path out = a.out.empty() ? fs::path(env_or("RAINVSL_OUT", "out")) : fs::path(a.out);
  ensure_dir(out);

  const RunMode mode = parse_mode(a.mode);
  spdlog::info("running {} ({} mode, seed {})", cfg.name, to_string(mode), seed);
  const SimulationResult res = run_simulation(cfg, mode, seed);

  std::vector<std::string> artifacts;
  auto emit = [&](const std::string& name, auto&& writer) {
    auto f = open_out(out / name);
    writer(f);
    if (!f) throw IoError("failed writing " + (out / name).string());
    artifacts.push_back(name);
  };

  if (a.format == "json") {
    emit("metrics.json", [&](std::ostream& o) { o << metrics_json(res.metrics).dump(2) << '\n'; });
  } else {
    emit("metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, res.metrics); });
  }
  emit("segment_speeds.csv", [&](std::ostream& o) { write_segment_speeds(o, res.metrics); });
  emit("stations.csv", [&](std::ostream& o) { write_station_csv(o, res.stations); });
  emit("events.log", [&](std::ostream& o) { write_event_log(o, res.events); });
  if (mode == RunMode::control) {
    std::vector<GuidancePlan> plans;
    for (const auto& c : res.cycles) plans.push_back(c.plan);
    emit("plans.csv", [&](std::ostream& o) { controller::write_plan_csv(o, plans); });
    emit("pds.csv", [&](std::ostream& o) { write_pds_csv(o, res.cycles); });
    emit("trajectory.csv", [&](std::ostream& o) {
      bool header = true;
      for (const auto& c : res.cycles) {
        metanet::write_trajectory_csv(o, c.prediction, c.cycle, header);
        header = false;
      }
    });
  }

  json manifest;
  manifest["scenario"] = a.scenario;
  manifest["mode"] = std::string(to_string(mode));
  manifest["seed"] = seed;
  manifest["output_dir"] = out.string();
  manifest["artifacts"] = artifacts;
  manifest["tool_version"] = RAINVSL_VERSION;
  manifest["config_hash"] = fmt::format("{:016x}", config_hash(cfg));
  auto mf = open_out(out / "manifest.json");
  mf << manifest.dump(2) << '\n';
  std::cout << (out / "manifest.json").string() << '\n';
  return kOk;
}

// ---- sweep -----------------------------------------------------------------

struct SweepArgs {
  std::string scenario;
  std::string param = "gamma";
  std::string values;
  int seeds = 10;
  std::string out;
  int jobs = 0;
  std::string mode = "control";
};

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    item = first == std::string::npos ? "" : item.substr(first, last - first + 1);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || end != item.data() + item.size()) {
      throw ValidationError("values", fmt::format("'{}' is not a number", item));
    }
    if (v < 0.0 || v > 1.0) throw ValidationError("values", fmt::format("gamma {} outside [0, 1]", v));
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("values", "at least one value is required");
  return out;
}

int cmd_sweep(const SweepArgs& a) {
  const std::vector<double> values = parse_values(a.values);
  if (a.seeds < 1) throw ValidationError("seeds", "need at least one seed");
  const ScenarioConfig base = load_scenario(a.scenario);
  const fs::path out = a.out.empty() ? fs::path(env_or("RAINVSL_OUT", "out")) : fs::path(a.out);
  ensure_dir(out);
  int jobs = a.jobs > 0 ? a.jobs : std::stoi(env_or("RAINVSL_JOBS", "0"));
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  struct Point {
    double gamma;
    std::uint64_t seed;
    MetricsReport m;
  };
  std::vector<Point> points;
  for (double g : values) {
    for (int s = 0; s < a.seeds; ++s) points.push_back({g, base.seed + static_cast<std::uint64_t>(s), {}});
  }
  const RunMode mode = parse_mode(a.mode);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t k = next++; k < points.size(); k = next++) {
      try {
        ScenarioConfig cfg = base;
        cfg.control.compliance = points[k].gamma;
        points[k].m = run_simulation(cfg, mode, points[k].seed).metrics;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(jobs, static_cast<int>(points.size())); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  const std::size_t lanes = base.lane_count();
  {
    auto f = open_out(out / "sweep.csv");
    f << "gamma,seed,TTT,TTD";
    for (std::size_t j = 0; j < lanes; ++j) f << ",SD_lane" << j + 1;
    f << '\n';
    for (const auto& p : points) {
      f << fmt::format("{},{},{},{}", p.gamma, p.seed, p.m.ttt_veh_h, p.m.ttd_veh_km);
      for (double sd : p.m.sd_per_lane) f << ',' << fmt::format("{}", sd);
      f << '\n';
    }
  }
  {
    auto f = open_out(out / "sweep_summary.csv");
    f << "gamma,runs,TTT_mean,TTD_mean";
    for (std::size_t j = 0; j < lanes; ++j) f << ",SD_lane" << j + 1 << "_mean";
    f << '\n';
    for (double g : values) {
      double ttt = 0.0;
      double ttd = 0.0;
      std::vector<double> sd(lanes, 0.0);
      int n = 0;
      for (const auto& p : points) {
        if (p.gamma != g) continue;
        ttt += p.m.ttt_veh_h;
        ttd += p.m.ttd_veh_km;
        for (std::size_t j = 0; j < lanes; ++j) sd[j] += p.m.sd_per_lane[j];
        ++n;
      }
      f << fmt::format("{},{},{},{}", g, n, ttt / n, ttd / n);
      for (double s : sd) f << ',' << fmt::format("{}", s / n);
      f << '\n';
    }
  }
  std::cout << (out / "sweep.csv").string() << '\n';
  return kOk;
}

// ---- safety-table ----------------------------------------------------------

struct SafetyArgs {
  std::string config;
  double rain_min = 0.0;
  double rain_max = 10.0;
  int steps = 11;
};

int cmd_safety_table(const SafetyArgs& a) {
  if (a.steps < 1) throw ValidationError("steps", "need at least one row");
  if (a.rain_min < 0.0 || a.rain_max < a.rain_min) throw ValidationError("rain", "need 0 <= rain-min <= rain-max");
  const ScenarioConfig cfg = load_scenario(a.config);
  const std::size_t r = cfg.ramp_segment();
  std::cout << "d,h,phi,L_v,V_max,V_r,a_max,closed_form\n";
  for (int k = 0; k < a.steps; ++k) {
    const double d = a.steps == 1 ? a.rain_min : a.rain_min + (a.rain_max - a.rain_min) * k / (a.steps - 1);
    const auto env = build_envelope_for_rain(cfg, std::vector<double>(cfg.segments.size(), d));
    std::string closed_form = "NA";
    try {
      closed_form = fmt::format("{}", safety::mainline_safe_speed_closed_form(env.film_depth_mm[r], d));
    } catch (const Error& e) {
      spdlog::debug("closed form at d={}: {}", d, e.what());
    }
    std::cout << fmt::format("{},{},{},{},{},{},{},{}\n", d, env.film_depth_mm[r], env.adhesion[r],
                             env.visibility_m[r], env.max_safe_speed_kmh[r], env.ramp_safe_speed_kmh,
                             env.max_deceleration_ms2, closed_form);
  }
  return kOk;
}

// ---- calibrate -------------------------------------------------------------

struct CalibrateArgs {
  std::string data;
  std::string target = "fd";
  std::string out;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const DetectorDataset data = calibration::load_detector_csv(a.data);
  std::string fragment;
  if (a.target == "fd") {
    const auto fits = calibration::fit_fundamental_diagrams(data);
    for (const auto& f : fits) {
      std::cerr << fmt::format("segment {} lane {}: v_f={:.4f} k_c={:.4f} a={:.4f} rms={:.4g} ({} rows)\n", f.segment,
                               f.lane, f.free_flow_speed_kmh, f.critical_density_vpkm, f.exponent, f.residual_rms,
                               f.rows_used);
    }
    fragment = calibration::fd_fragment(fits);
  } else {
    if (!data.has_visibility) throw ValidationError("header", "rain fit needs a visibility column");
    const auto fit = calibration::fit_rain_speed_density(data);
    std::cerr << fmt::format("A={} B={} C={} rms={:.4g} ({} rows)\n", fit.params.a, fit.params.b, fit.params.c,
                             fit.residual_rms, fit.rows_used);
    fragment = calibration::rain_fragment(fit);
  }
  std::cout << fragment;
  if (!a.out.empty()) {
    auto f = open_out(a.out);
    f << fragment;
  }
  return kOk;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const SchemaError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return kIo;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("rainvsl"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Rain-aware lane-level speed guidance with off-ramp progressive deceleration"};
  app.require_subcommand(1);
  std::string level = "warn";
  app.add_option("--log-level", level, "trace|debug|info|warn|error")->capture_default_str();
  app.set_version_flag("--version", RAINVSL_VERSION);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Simulate one scenario in baseline or control mode");
  run_cmd->add_option("--scenario", run.scenario, "Scenario file")->required();
  run_cmd->add_option("--mode", run.mode)->check(CLI::IsMember({"baseline", "control"}))->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "RNG seed (defaults to the scenario seed)");
  run_cmd->add_option("--out", run.out, "Output directory (or RAINVSL_OUT)");
  run_cmd->add_option("--format", run.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Compliance-rate sensitivity sweep");
  sweep_cmd->add_option("--scenario", sweep.scenario)->required();
  sweep_cmd->add_option("--param", sweep.param)->check(CLI::IsMember({"gamma"}))->capture_default_str();
  sweep_cmd->add_option("--values", sweep.values, "Comma-separated values")->required();
  sweep_cmd->add_option("--seeds", sweep.seeds)->capture_default_str();
  sweep_cmd->add_option("--out", sweep.out, "Output directory (or RAINVSL_OUT)");
  sweep_cmd->add_option("--jobs", sweep.jobs, "Concurrent runs (or RAINVSL_JOBS)");
  sweep_cmd->add_option("--mode", sweep.mode)->check(CLI::IsMember({"baseline", "control"}))->capture_default_str();

  SafetyArgs safety_args;
  auto* safety_cmd = app.add_subcommand("safety-table", "Tabulate the safety envelope over rainfall");
  safety_cmd->add_option("--ramp-config", safety_args.config, "Scenario file with the ramp geometry")->required();
  safety_cmd->add_option("--rain-min", safety_args.rain_min, "mm/h")->capture_default_str();
  safety_cmd->add_option("--rain-max", safety_args.rain_max, "mm/h")->capture_default_str();
  safety_cmd->add_option("--steps", safety_args.steps)->capture_default_str();

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit model parameters from detector data");
  cal_cmd->add_option("--data", cal.data, "Detector CSV")->required();
  cal_cmd->add_option("--target", cal.target)->check(CLI::IsMember({"fd", "rain"}))->capture_default_str();
  cal_cmd->add_option("--out", cal.out, "Write the config fragment here too");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }
  spdlog::set_level(spdlog::level::from_str(level));

  if (*run_cmd) return guarded([&] { return cmd_run(run); });
  if (*sweep_cmd) return guarded([&] { return cmd_sweep(sweep); });
  if (*safety_cmd) return guarded([&] { return cmd_safety_table(safety_args); });
  return guarded([&] { return cmd_calibrate(cal); });
}
