#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& stdout_file = "/dev/null") {
  const std::string cmd = std::string(RAINVSL_CLI) + " " + args + " > " + stdout_file + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kFixture = RAINVSL_FIXTURE;

}  // namespace

TEST_CASE("run writes the artifact set and a manifest") {
  const fs::path dir = "cli_run_a";
  fs::remove_all(dir);
  REQUIRE(run("run --scenario " + kFixture + " --mode baseline --seed 2 --out " + dir.string(), "cli_stdout.txt") == 0);
  for (const char* f : {"metrics.json", "segment_speeds.csv", "stations.csv", "events.log", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  const auto printed = slurp("cli_stdout.txt");
  CHECK(printed.find("manifest.json") != std::string::npos);
  const auto manifest = slurp(dir / "manifest.json");
  CHECK(manifest.find("\"config_hash\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 2") != std::string::npos);
}

TEST_CASE("run is byte-for-byte repeatable") {
  for (const char* d : {"cli_det_a", "cli_det_b"}) {
    fs::remove_all(d);
    REQUIRE(run(std::string("run --scenario ") + kFixture + " --mode control --seed 5 --out " + d) == 0);
  }
  for (const char* f : {"metrics.json", "segment_speeds.csv", "stations.csv", "plans.csv", "pds.csv"}) {
    CHECK_MESSAGE(slurp(fs::path("cli_det_a") / f) == slurp(fs::path("cli_det_b") / f), f);
  }
}

TEST_CASE("csv metrics format") {
  fs::remove_all("cli_csv");
  REQUIRE(run("run --scenario " + kFixture + " --format csv --out cli_csv") == 0);
  CHECK(slurp("cli_csv/metrics.csv").rfind("metric,value\n", 0) == 0);
}

TEST_CASE("exit codes") {
  CHECK(run("run --scenario /nonexistent/x.cfg --out cli_missing") == 3);
  CHECK(run("run") == 1);
  CHECK(run("frobnicate") == 1);
  {
    std::ofstream bad("cli_bad.cfg");
    bad << "name: broken\nsegments: 3\n";
  }
  CHECK(run("run --scenario cli_bad.cfg --out cli_bad") == 1);
  {
    std::ofstream csv("cli_bad_header.csv");
    csv << "time,segment,lane,q,k,v\n";
  }
  CHECK(run("calibrate --data cli_bad_header.csv --target fd") == 1);
  CHECK(run("sweep --scenario " + kFixture + " --values \"\" --out cli_sweep_empty") == 1);
}

TEST_CASE("safety table") {
  REQUIRE(run("safety-table --ramp-config " + kFixture + " --rain-min 0 --rain-max 6 --steps 4", "cli_safety.txt") ==
          0);
  const auto text = slurp("cli_safety.txt");
  CHECK(text.rfind("d,h,phi,L_v,V_max,V_r,a_max,closed_form\n", 0) == 0);
  int lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 5);
}

TEST_CASE("small sweep") {
  fs::remove_all("cli_sweep");
  REQUIRE(run("sweep --scenario " + kFixture + " --values 0,1 --seeds 2 --jobs 2 --mode baseline --out cli_sweep") ==
          0);
  const auto text = slurp("cli_sweep/sweep.csv");
  CHECK(text.rfind("gamma,seed,TTT,TTD,", 0) == 0);
  int lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 5);
  CHECK(fs::exists("cli_sweep/sweep_summary.csv"));
}
