#include <doctest.h>

#include <filesystem>

#include "../support/fuzz_scenario.hpp"
#include "dsat/scenario.hpp"

using namespace dsat;
using namespace std::chrono_literals;

namespace {

int error_line(std::string_view text) {
  try {
    parse_scenario(text);
  } catch (const ScenarioError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("durations") {
  CHECK(parse_duration("1.5ms") == 1500us);
  CHECK(parse_duration("2s") == 2000000us);
  CHECK(parse_duration("250us") == 250us);
  CHECK(parse_duration("0.000001s") == 1us);
  CHECK(parse_duration("0") == 0us);
  CHECK_THROWS_AS(parse_duration("5"), Error);
  CHECK_THROWS_AS(parse_duration("1.5us"), Error);
  CHECK_THROWS_AS(parse_duration("ms"), Error);
  CHECK_THROWS_AS(parse_duration("-1ms"), Error);
  for (const Duration d : {0us, 1us, 999us, 1000us, 1500us, 60000us, 2000000us, 2500001us}) {
    CHECK(parse_duration(format_duration(d)) == d);
  }
}

TEST_CASE("shipped scenarios validate and round-trip") {
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(DSAT_SCENARIO_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    CAPTURE(entry.path().string());
    const Scenario sc = load_scenario(entry.path().string());
    CHECK_NOTHROW(validate_scenario(sc));
    CHECK(parse_scenario(serialize_scenario(sc)) == sc);
    ++seen;
  }
  CHECK(seen >= 10);
}

TEST_CASE("random scenarios round-trip") {
  for (std::uint64_t i = 0; i < 100; ++i) {
    CAPTURE(i);
    const Scenario sc = fuzz::random_scenario(i);
    CHECK_NOTHROW(validate_scenario(sc));
    CHECK(parse_scenario(serialize_scenario(sc)) == sc);
  }
}

TEST_CASE("parse errors carry the line number") {
  CHECK(error_line("[scenario]\nname = x\nbogus = 1\n") == 3);
  CHECK(error_line("# comment\nname = x\n") == 2);
  CHECK(error_line("[scenario]\n\n[timing\n") == 3);
  CHECK(error_line("[scenario]\nsim_time\n") == 2);
  CHECK(error_line("[timing]\nquiet = 20\n") == 2);
  CHECK(error_line("[scenario]\nname = a\nname = b\n") == 3);
  CHECK(error_line("[channel 1]\npu = scripted\nbusy = 20ms\n") == 3);
}

TEST_CASE("validation rejects dangling references and bad timing") {
  Scenario sc;
  sc.channels = {{ChannelId{1}, {}}};
  sc.nodes.count = 2;
  sc.nodes.channel = ChannelId{1};
  sc.flows[FlowId{1}] = FlowConfig{FlowId{1}, NodeId{1}, NodeId{2}, 1000, 5ms};
  CHECK_NOTHROW(validate_scenario(sc));

  auto bad_dst = sc;
  bad_dst.flows[FlowId{1}].dst = NodeId{9};
  CHECK_THROWS_AS(validate_scenario(bad_dst), ScenarioError);

  auto self = sc;
  self.flows[FlowId{1}].dst = NodeId{1};
  CHECK_THROWS_AS(validate_scenario(self), ScenarioError);

  auto tight = sc;
  tight.timing.quiet = 60ms;
  CHECK_THROWS_AS(validate_scenario(tight), ScenarioError);

  auto sweep = sc;
  sweep.sweep = SweepConfig{"timing.colour", {"1ms"}};
  CHECK_THROWS_AS(validate_scenario(sweep), ScenarioError);
  sweep.sweep = SweepConfig{"timing.quiet", {"ten"}};
  CHECK_THROWS_AS(validate_scenario(sweep), ScenarioError);
}

TEST_CASE("sweeps rewrite one parameter") {
  Scenario sc;
  sc.nodes.count = 4;
  CHECK(apply_sweep(sc, "timing.quiet", "15ms").timing.quiet == 15ms);
  CHECK(apply_sweep(sc, "nodes.count", "9").nodes.count == 9);
  CHECK(apply_sweep(sc, "scenario.bytes_per_slot", "125").bytes_per_slot == 125);
  CHECK_THROWS(apply_sweep(sc, "nope", "1"));
}

TEST_CASE("flow template is a ring over the nodes") {
  Scenario sc;
  sc.nodes.count = 3;
  sc.flow_template.count = 3;
  const auto flows = expand_flows(sc);
  REQUIRE(flows.size() == 3);
  CHECK(flows[0].src == NodeId{1});
  CHECK(flows[0].dst == NodeId{2});
  CHECK(flows[2].src == NodeId{3});
  CHECK(flows[2].dst == NodeId{1});
}
