#include <doctest.h>

#include "rainvsl/errors.hpp"
#include "rainvsl/scenario.hpp"
#include "support.hpp"

using namespace rainvsl;

TEST_CASE("fixture loads with the expected geometry") {
  const auto& cfg = testing::fixture();
  CHECK(cfg.segments.size() == 4);
  CHECK(cfg.lane_count() == 3);
  CHECK(cfg.ramp_segment() == 3);
  CHECK(cfg.road_length_m() == 2000.0);
  CHECK(cfg.time.cycles() == 12);
  CHECK(cfg.time.steps_per_cycle() == 15);
  CHECK(cfg.time.sim_steps_per_cycle() == 300);
  CHECK(cfg.segments[3].lanes[2].free_flow_speed_kmh == 75.4);
  CHECK(cfg.rain_speed_density.c == -43.76);
}

TEST_CASE("serialize and parse round trip") {
  const auto& cfg = testing::fixture();
  const auto text = serialize_scenario(cfg);
  const auto back = parse_scenario(text);
  CHECK(back == cfg);
  CHECK(serialize_scenario(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));

  auto other = cfg;
  other.metanet.rain_cap = RainCapModel::speed_density;
  other.control.compliance = 0.25;
  other.microsim.station_offsets_m = {0.0, 50.0};
  CHECK(parse_scenario(serialize_scenario(other)) == other);
  CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("rainfall lookup") {
  const auto& cfg = testing::fixture();
  CHECK(rainfall_at(cfg.rainfall, 3, 0.0) == 0.0);
  CHECK(rainfall_at(cfg.rainfall, 3, 900.0) == 2.5);
  CHECK(rainfall_at(cfg.rainfall, 3, 3599.0) == 6.0);
  CHECK_THROWS_AS(rainfall_at(cfg.rainfall, 3, 3600.0), RangeError);
  CHECK_THROWS_AS(rainfall_at(cfg.rainfall, 9, 0.0), RangeError);
}

TEST_CASE("schema errors name the field") {
  const auto text = serialize_scenario(testing::fixture());
  auto bad = text;
  bad.replace(bad.find("tau_s"), 5, "tau_x");
  try {
    parse_scenario(bad);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.field() == "metanet.tau_x");
  }
  CHECK_THROWS_AS(parse_scenario(""), SchemaError);
  CHECK_THROWS_AS(parse_scenario("segments: [1, 2"), SchemaError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.cfg"), IoError);
}

TEST_CASE("validation rejects broken invariants") {
  auto cfg = testing::fixture();
  cfg.control.compliance = 1.5;
  CHECK_THROWS_AS(validate(cfg), ValidationError);

  cfg = testing::fixture();
  cfg.segments[3].ramp.reset();
  CHECK_THROWS_AS(validate(cfg), ValidationError);

  cfg = testing::fixture();
  cfg.rainfall.intervals[1].start_s = 950.0;
  CHECK_THROWS_AS(validate(cfg), ValidationError);

  cfg = testing::fixture();
  cfg.segments[1].lanes.pop_back();
  CHECK_THROWS_AS(validate(cfg), ValidationError);

  cfg = testing::fixture();
  cfg.time.control_period_s = 310.0;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
}
