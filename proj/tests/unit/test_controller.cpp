#include <doctest.h>

#include <limits>
#include <sstream>

#include "rainvsl/controller.hpp"
#include "rainvsl/errors.hpp"
#include "rainvsl/units.hpp"
#include "support.hpp"

using namespace rainvsl;

namespace {

ScenarioConfig two_segment_one_lane() {
  ScenarioConfig cfg = testing::fixture();
  cfg.segments.erase(cfg.segments.begin(), cfg.segments.begin() + 2);
  for (auto& s : cfg.segments) s.lanes.erase(s.lanes.begin(), s.lanes.end() - 1);
  cfg.time.horizon_s = 300;
  cfg.rainfall.intervals = {{0.0, 300.0, {2.5, 6.0}}};
  cfg.demand.inflow_vph = {1600.0};
  validate(cfg);
  return cfg;
}

LaneSegmentState congested(const ScenarioConfig& cfg) {
  LaneSegmentState s(cfg.segments.size(), cfg.lane_count());
  for (std::size_t i = 0; i < s.segments(); ++i) {
    for (std::size_t j = 0; j < s.lanes(); ++j) {
      s.density_vpkm(i, j) = 25.0 + 10.0 * static_cast<double>(i);
      s.speed_kmh(i, j) = 60.0 - 8.0 * static_cast<double>(i);
    }
  }
  return s;
}

class ThrowingPlant : public Plant {
 public:
  explicit ThrowingPlant(const ScenarioConfig& cfg) : inner_(cfg) {}
  LaneSegmentState observe() override { return inner_.observe(); }
  void apply(const GuidancePlan& plan, const SafetyEnvelope& env) override {
    if (++calls_ == 3) throw NumericError("plant diverged");
    inner_.apply(plan, env);
  }

 private:
  MetanetPlant inner_;
  int calls_ = 0;
};

}  // namespace

TEST_CASE("objective value") {
  LaneSegmentState s(1, 1);
  s.density_vpkm(0, 0) = 10;
  s.speed_kmh(0, 0) = 50;
  const ObjectiveWeights w{3, 2, 5};
  CHECK(controller::objective({s}, w, 0.5, {0.5}, 0.1) == doctest::Approx(-46.0));
  CHECK(controller::objective({s, s}, w, 0.0, {0.5}, 0.1) == doctest::Approx(-97.0));
  CHECK_THROWS_AS(controller::objective({s}, w, 0.0, {0.5, 0.5}, 0.1), DomainError);
}

TEST_CASE("dispersion") {
  LaneGrid<double> var(2, 1);
  var(0, 0) = 2.5;
  var(1, 0) = 3.75;
  const auto d = controller::dispersion_from_variances(var);
  CHECK(d.per_lane[0] == doctest::Approx(1.7677669529663688).epsilon(1e-14));
  CHECK(d.aggregate == d.per_lane[0]);

  const std::vector<SpeedRecord> recs{{0, 0, 50}, {0, 0, 60}, {0, 1, 80}, {1, 0, 40}, {1, 0, 44}, {1, 0, 48}};
  const auto sd = controller::speed_dispersion(recs, 2, 2);
  const double var0 = 25.0;
  const double var1 = 32.0 / 3.0;
  CHECK(sd.per_lane[0] == doctest::Approx(std::sqrt((var0 + var1) / 2)));
  CHECK(sd.per_lane[1] == 0.0);
  CHECK_FALSE(sd.empty);

  const auto none = controller::speed_dispersion({}, 2, 2);
  CHECK(none.empty);
  CHECK(none.aggregate == 0.0);
  CHECK_THROWS_AS(controller::speed_dispersion({{5, 0, 1}}, 2, 2), DomainError);

  LaneSegmentState flat(3, 1);
  for (auto& v : flat.speed_kmh.flat()) v = 70;
  CHECK(controller::predicted_dispersion({flat}).aggregate == 0.0);
}

TEST_CASE("constraint checks") {
  const auto& cfg = testing::fixture();
  const auto env = build_envelope(cfg, 0.0);
  GuidancePlan plan = controller::legal_limit_plan(cfg);
  plan.deceleration_ms2 = env.max_deceleration_ms2;
  CHECK(controller::check_constraints(plan, nullptr, env, cfg).feasible());

  plan.speed_kmh(0, 0) = 100;
  plan.speed_kmh(1, 0) = 70;
  plan.speed_kmh(2, 0) = 70;
  plan.speed_kmh(3, 0) = 70;
  auto rep = controller::check_constraints(plan, nullptr, env, cfg);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].constraint == 16);
  CHECK(rep.violations[0].lhs == 30);
  CHECK(rep.violations[0].bound == 20);
  CHECK(rep.describe().find("constraint 16") != std::string::npos);

  GuidancePlan prev = controller::legal_limit_plan(cfg);
  plan = prev;
  plan.deceleration_ms2 = env.max_deceleration_ms2;
  plan.speed_kmh(1, 1) = 100;
  CHECK(controller::check_constraints(plan, &prev, env, cfg).feasible());
  for (std::size_t i = 0; i < 4; ++i) plan.speed_kmh(i, 1) = 95;
  rep = controller::check_constraints(plan, &prev, env, cfg);
  REQUIRE(rep.violations.size() == 3);
  for (const auto& v : rep.violations) {
    CHECK(v.constraint == 17);
    CHECK(v.lhs == 25);
  }

  plan = prev;
  plan.speed_kmh(3, 2) = 130;
  plan.deceleration_ms2 = env.max_deceleration_ms2 + 0.01;
  rep = controller::check_constraints(plan, nullptr, env, cfg);
  std::vector<int> ids;
  for (const auto& v : rep.violations) ids.push_back(v.constraint);
  CHECK(std::count(ids.begin(), ids.end(), 15) == 1);
  CHECK(std::count(ids.begin(), ids.end(), 18) == 1);
}

TEST_CASE("guidance cap and envelope cap plan") {
  const auto& cfg = testing::fixture();
  const auto wet = build_envelope(cfg, 3000.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double cap = controller::guidance_cap(i, j, wet, cfg);
      CHECK(std::fmod(cap, 5.0) == 0.0);
      CHECK(cap <= wet.max_safe_speed_kmh[i]);
      CHECK(cap > std::min({wet.max_safe_speed_kmh[i], cfg.segments[i].legal_limit_kmh,
                            cfg.segments[i].lanes[j].free_flow_speed_kmh}) - 5.0);
    }
  }
  const auto plan = controller::envelope_cap_plan(wet, cfg);
  const auto rep = controller::check_constraints(plan, nullptr, wet, cfg);
  CHECK_MESSAGE(rep.feasible(), rep.describe());
  CHECK(plan.pds.entry_speed_kmh == plan.speed_kmh(3, 2));
}

TEST_CASE("dry free flow releases the cap") {
  auto cfg = two_segment_one_lane();
  cfg.rainfall.intervals = {{0.0, 300.0, {0.0, 0.0}}};
  cfg.demand.inflow_vph = {300.0};
  cfg.demand.exit_fraction = 0.0;
  cfg.segments[0].lanes = cfg.segments[1].lanes;
  const auto env = build_envelope(cfg, 0.0);
  LaneSegmentState s(2, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    s.speed_kmh(i, 0) = cfg.segments[i].lanes[0].free_flow_speed_kmh;
    s.density_vpkm(i, 0) = 300.0 / s.speed_kmh(i, 0);
  }
  const auto plan = controller::optimize_cycle(s, env, nullptr, controller::demand_boundary(cfg), cfg);
  CHECK(plan.feasible);
  for (std::size_t i = 0; i < 2; ++i) CHECK(plan.speed_kmh(i, 0) == controller::guidance_cap(i, 0, env, cfg));
}

TEST_CASE("coordinate descent matches exhaustive enumeration") {
  const auto cfg = two_segment_one_lane();
  const auto env = build_envelope(cfg, 0.0);
  const auto state = congested(cfg);
  const auto bc = controller::demand_boundary(cfg);
  const auto plan = controller::optimize_cycle(state, env, nullptr, bc, cfg);
  REQUIRE(plan.feasible);

  const auto decel = controller::deceleration_grid(env.max_deceleration_ms2, cfg.control.deceleration_step_ms2);
  double best = std::numeric_limits<double>::infinity();
  GuidancePlan best_plan = plan;
  GuidancePlan cand = plan;
  for (double v0 = 20; v0 <= controller::guidance_cap(0, 0, env, cfg); v0 += 5) {
    for (double v1 = 20; v1 <= controller::guidance_cap(1, 0, env, cfg); v1 += 5) {
      if (std::abs(v1 - v0) > cfg.control.adjacent_band_kmh) continue;
      for (double a : decel) {
        cand.speed_kmh(0, 0) = v0;
        cand.speed_kmh(1, 0) = v1;
        cand.deceleration_ms2 = a;
        const double j = controller::evaluate_plan(state, env, cand, bc, cfg);
        if (j < best) {
          best = j;
          best_plan = cand;
        }
      }
    }
  }
  // One grid quantum: the largest J change from a single 5 km/h move at the optimum.
  double quantum = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    for (double d : {-5.0, 5.0}) {
      GuidancePlan nb = best_plan;
      nb.speed_kmh(i, 0) += d;
      if (nb.speed_kmh(i, 0) < 20) continue;
      quantum = std::max(quantum, std::abs(controller::evaluate_plan(state, env, nb, bc, cfg) - best));
    }
  }
  CHECK(plan.objective <= best + quantum);
  CHECK(plan.objective >= best - 1e-9 * std::abs(best));
}

TEST_CASE("optimizer is deterministic and respects the bands") {
  const auto& cfg = testing::fixture();
  MetanetPlant plant(cfg);
  const auto bc = controller::demand_boundary(cfg);
  const auto env0 = build_envelope(cfg, 0.0);
  const auto env3 = build_envelope(cfg, 900.0);
  const auto p0 = controller::optimize_cycle(plant.observe(), env0, nullptr, bc, cfg);
  const auto p1 = controller::optimize_cycle(plant.observe(), env3, &p0, bc, cfg, 1);
  const auto again = controller::optimize_cycle(plant.observe(), env3, &p0, bc, cfg, 1);
  CHECK(p1 == again);
  CHECK(p1.feasible);
  const auto rep = controller::check_constraints(p1, &p0, env3, cfg);
  CHECK_MESSAGE(rep.feasible(), rep.describe());
  for (std::size_t k = 0; k < p1.speed_kmh.size(); ++k) {
    CHECK(p1.speed_kmh.flat()[k] <= p0.speed_kmh.flat()[k] + cfg.control.cycle_band_kmh);
  }
}

TEST_CASE("infeasible cycle falls back to the projected cap") {
  const auto& cfg = testing::fixture();
  MetanetPlant plant(cfg);
  const auto env = build_envelope(cfg, 3000.0);
  GuidancePlan prev = controller::legal_limit_plan(cfg);
  for (auto& v : prev.speed_kmh.flat()) v = 120;
  const auto plan = controller::optimize_cycle(plant.observe(), env, &prev, controller::demand_boundary(cfg), cfg, 5);
  CHECK_FALSE(plan.feasible);
  CHECK(plan.cycle == 5);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(plan.speed_kmh(i, j) <= controller::guidance_cap(i, j, env, cfg));
  }
}

TEST_CASE("closed loop on the prediction model") {
  const auto& cfg = testing::fixture();
  MetanetPlant plant(cfg);
  const auto records = controller::run_control_loop(cfg, plant);
  REQUIRE(records.size() == 12);
  CHECK(plant.history().size() == 12u * 15u);
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto* prev = k == 0 ? nullptr : &records[k - 1].plan;
    const auto rep = controller::check_constraints(records[k].plan, prev, records[k].envelope, cfg);
    CHECK_MESSAGE(rep.feasible(), rep.describe());
    CHECK(records[k].plan.cycle == static_cast<int>(k));
    CHECK(records[k].prediction.size() == 15);
  }

  ThrowingPlant bad(cfg);
  try {
    controller::run_control_loop(cfg, bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("control cycle 2") != std::string::npos);
  }
}

TEST_CASE("helpers") {
  const auto& cfg = testing::fixture();
  const auto plan = controller::legal_limit_plan(cfg);
  CHECK(plan.speed_kmh(0, 0) == 120);
  CHECK(plan.speed_kmh(3, 2) == 100);
  CHECK_FALSE(plan.pds.active());

  const auto grid = controller::deceleration_grid(1.0, 0.25);
  CHECK(grid == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(controller::deceleration_grid(0.1, 0.25) == std::vector<double>{0.1});

  const auto env = build_envelope(cfg, 0.0);
  GuidancePlan g = controller::envelope_cap_plan(env, cfg);
  const auto eff = controller::effective_guidance(g, cfg);
  const double vj = g.speed_kmh(3, 2);
  const double mean = pds::mean_guidance_speed(g.pds, 500.0);
  CHECK(eff(3, 2) == doctest::Approx(vj - 0.3 * (vj - mean)));
  CHECK(eff(2, 2) == g.speed_kmh(2, 2));

  std::ostringstream out;
  controller::write_plan_csv(out, {g});
  CHECK(out.str().rfind("cycle,i,j,v_g,a_o,J,feasible\n0,0,0,", 0) == 0);
}
