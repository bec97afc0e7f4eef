#include <benchmark/benchmark.h>

#include <optional>

#include <spdlog/spdlog.h>

#include "rainvsl/controller.hpp"
#include "rainvsl/metanet.hpp"
#include "rainvsl/microsim.hpp"
#include "rainvsl/safety.hpp"
#include "rainvsl/scenario.hpp"

using namespace rainvsl;

namespace {

const ScenarioConfig& scenario() {
  static const ScenarioConfig cfg = load_scenario(RAINVSL_FIXTURE);
  return cfg;
}

}  // namespace

static void BM_BuildEnvelope(benchmark::State& state) {
  const auto& cfg = scenario();
  for (auto _ : state) benchmark::DoNotOptimize(build_envelope(cfg, 3000.0));
}
BENCHMARK(BM_BuildEnvelope);

static void BM_MetanetStep(benchmark::State& state) {
  const auto& cfg = scenario();
  const auto env = build_envelope(cfg, 3000.0);
  const auto bc = controller::demand_boundary(cfg);
  MetanetPlant plant(cfg);
  auto s = plant.observe();
  for (auto _ : state) {
    s = metanet::step(s, std::nullopt, bc, env, cfg);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_MetanetStep);

static void BM_OptimizeCycle(benchmark::State& state) {
  const auto& cfg = scenario();
  const auto env = build_envelope(cfg, state.range(0));
  const auto bc = controller::demand_boundary(cfg);
  MetanetPlant plant(cfg);
  const auto s = plant.observe();
  for (auto _ : state) benchmark::DoNotOptimize(controller::optimize_cycle(s, env, nullptr, bc, cfg));
}
BENCHMARK(BM_OptimizeCycle)->Arg(0)->Arg(3000)->Unit(benchmark::kMillisecond);

static void BM_MicrosimStep(benchmark::State& state) {
  const auto& cfg = scenario();
  std::optional<Microsim> sim;
  auto fresh = [&] {
    sim.emplace(cfg, 1, cfg.control.compliance);
    sim->set_plan(controller::legal_limit_plan(cfg));
    for (int t = 0; t < 600; ++t) sim->step();
  };
  fresh();
  for (auto _ : state) {
    if (sim->time_s() >= cfg.time.horizon_s - 1.0) {
      state.PauseTiming();
      fresh();
      state.ResumeTiming();
    }
    sim->step();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_MicrosimStep);

static void BM_ControlRun(benchmark::State& state) {
  const auto& cfg = scenario();
  for (auto _ : state) benchmark::DoNotOptimize(run_simulation(cfg, RunMode::control, 1));
}
BENCHMARK(BM_ControlRun)->Unit(benchmark::kMillisecond)->Iterations(3);

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
