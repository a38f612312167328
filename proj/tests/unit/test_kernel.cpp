#include <doctest.h>

#include <set>
#include <sstream>

#include "../support/fuzz_scenario.hpp"
#include "dsat/energy.hpp"
#include "dsat/metrics.hpp"
#include "dsat/simkernel.hpp"

using namespace dsat;
using namespace std::chrono_literals;

namespace {

struct TraceLine {
  std::int64_t time = 0;
  std::string channel;
  std::string node;
  std::string kind;
  std::string rest;
};

std::vector<TraceLine> parse_trace(const std::vector<std::string>& lines) {
  std::vector<TraceLine> out;
  for (const auto& l : lines) {
    std::istringstream in(l);
    TraceLine t;
    in >> t.time >> t.channel >> t.node >> t.kind;
    std::getline(in, t.rest);
    out.push_back(t);
  }
  return out;
}

Scenario one_channel(int nodes) {
  Scenario sc;
  sc.sim_time = 2s;
  sc.sleep_after = 0;
  sc.channels = {{ChannelId{1}, {}}};
  sc.nodes.count = nodes;
  sc.nodes.channel = ChannelId{1};
  return sc;
}

RunResult traced(const Scenario& sc, std::uint64_t seed = 1) {
  RunOptions opt;
  opt.trace = true;
  return run_detailed(sc, seed, opt);
}

}  // namespace

TEST_CASE("event kinds are ranked PU first, transmissions last") {
  CHECK(static_cast<int>(EventKind::PuStateChange) < static_cast<int>(EventKind::TrafficArrival));
  CHECK(static_cast<int>(EventKind::TrafficArrival) < static_cast<int>(EventKind::TimerExpiry));
  CHECK(static_cast<int>(EventKind::TimerExpiry) < static_cast<int>(EventKind::PacketRxComplete));
  CHECK(static_cast<int>(EventKind::PacketRxComplete) < static_cast<int>(EventKind::SlotBoundary));
  CHECK(static_cast<int>(EventKind::SlotBoundary) < static_cast<int>(EventKind::SuperframeBoundary));
  CHECK(static_cast<int>(EventKind::SuperframeBoundary) < static_cast<int>(EventKind::PacketTx));
}

TEST_CASE("rng streams differ by stream and index and repeat by seed") {
  auto a = make_stream(7, RngStream::Pu, 1);
  auto b = make_stream(7, RngStream::Pu, 1);
  auto c = make_stream(7, RngStream::Pu, 2);
  auto d = make_stream(7, RngStream::Traffic, 1);
  const auto va = a();
  CHECK(va == b());
  CHECK(va != c());
  CHECK(va != d());
}

TEST_CASE("scripted PU replays its busy intervals") {
  PuActivityModel m;
  m.kind = PuActivityModel::Kind::Scripted;
  m.busy = {{10ms, 20ms}, {50ms, 65ms}};
  PuProcess pu(m, make_stream(1, RngStream::Pu, 1));
  std::vector<std::pair<std::int64_t, bool>> seen;
  CHECK_FALSE(pu.busy());
  while (pu.next_change()) {
    const auto t = pu.next_change()->count();
    pu.advance();
    seen.emplace_back(t, pu.busy());
  }
  const std::vector<std::pair<std::int64_t, bool>> want{{10000, true}, {20000, false}, {50000, true}, {65000, false}};
  CHECK(seen == want);
}

TEST_CASE("always-busy and always-idle PU never change") {
  PuActivityModel busy;
  busy.kind = PuActivityModel::Kind::AlwaysBusy;
  PuProcess b(busy, make_stream(1, RngStream::Pu, 1));
  CHECK(b.busy());
  CHECK_FALSE(b.next_change().has_value());
  PuProcess i(PuActivityModel{}, make_stream(1, RngStream::Pu, 1));
  CHECK_FALSE(i.busy());
  CHECK_FALSE(i.next_change().has_value());
}

TEST_CASE("markov PU spends its duty cycle busy") {
  PuActivityModel m;
  m.kind = PuActivityModel::Kind::Markov;
  m.mean_on = 5ms;
  m.mean_off = 45ms;
  CHECK(m.duty_cycle() == doctest::Approx(0.1));
  PuProcess pu(m, make_stream(3, RngStream::Pu, 1));
  const SimTime horizon = std::chrono::seconds(2000);
  SimTime last{0};
  std::int64_t busy_us = 0;
  bool state = pu.busy();
  while (pu.next_change() && *pu.next_change() < horizon) {
    const SimTime t = *pu.next_change();
    if (state) busy_us += (t - last).count();
    last = t;
    pu.advance();
    state = pu.busy();
  }
  if (state) busy_us += (horizon - last).count();
  const double duty = static_cast<double>(busy_us) / static_cast<double>(horizon.count());
  CHECK(duty == doctest::Approx(0.10).epsilon(0.2));
}

TEST_CASE("NUS contention succeeds with probability k / 2^k") {
  auto rng = make_stream(11, RngStream::Contention, 0);
  const std::vector<NodeId> one{NodeId{1}};
  CHECK(resolve_nus_contention(one, rng).winner == NodeId{1});
  for (int k = 2; k <= 5; ++k) {
    std::vector<NodeId> ids;
    for (int i = 1; i <= k; ++i) ids.push_back(NodeId{static_cast<std::uint16_t>(i)});
    const int trials = 40000;
    int wins = 0;
    for (int t = 0; t < trials; ++t) {
      const auto o = resolve_nus_contention(ids, rng);
      CHECK(o.winner.has_value() != o.collision);
      if (o.winner) {
        // the winner is the only contender with sub-slot 0
        int zeros = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (o.picks[i] == 0) {
            ++zeros;
            CHECK(ids[i] == *o.winner);
          }
        }
        CHECK(zeros == 1);
        ++wins;
      }
    }
    const double expect = k / static_cast<double>(1 << k);
    CHECK(static_cast<double>(wins) / trials == doctest::Approx(expect).epsilon(0.05));
  }
}

TEST_CASE("a PU burst in the quiet period suspends the frame") {
  Scenario sc = one_channel(2);
  sc.sim_time = 400ms;
  sc.channels[0].pu.kind = PuActivityModel::Kind::Scripted;
  sc.channels[0].pu.busy = {{65ms, 70ms}};
  sc.flows[FlowId{1}] = FlowConfig{FlowId{1}, NodeId{1}, NodeId{2}, 1000, 2ms};
  const auto r = traced(sc);
  CHECK(r.violations.empty());
  bool suspended = false;
  for (const auto& t : parse_trace(r.trace)) {
    if (t.kind == "suspend" && t.time >= 60000 && t.time <= 80000) suspended = true;
    if (t.kind == "data-tx") CHECK_FALSE((t.time >= 60000 && t.time < 120000));
  }
  CHECK(suspended);
  CHECK(r.ledger.channels.at(0).suspended >= 1);
  CHECK(r.ledger.total_throughput_Bps() > 0);
}

TEST_CASE("a channel the PU never leaves carries nothing") {
  Scenario sc = one_channel(2);
  sc.channels[0].pu.kind = PuActivityModel::Kind::AlwaysBusy;
  sc.flows[FlowId{1}] = FlowConfig{FlowId{1}, NodeId{1}, NodeId{2}, 1000, 2ms};
  const auto l = run(sc, 1);
  CHECK(l.flows.at(0).bytes_delivered == 0);
  CHECK(l.total_throughput_Bps() == 0.0);
}

TEST_CASE("a saturated pair gets close to the with-ack ceiling") {
  Scenario sc = one_channel(2);
  sc.sim_time = 3s;
  sc.warmup = 600ms;
  sc.flows[FlowId{1}] = FlowConfig{FlowId{1}, NodeId{1}, NodeId{2}, 1000, 1ms};
  const double got = run(sc, 1).total_throughput_Bps();
  const double ceiling = theoretical_throughput(sc.timing, 2, sc.bytes_per_slot, ThroughputMode::WithAck);
  CHECK(got <= theoretical_throughput(sc.timing, 2, sc.bytes_per_slot, ThroughputMode::Paper));
  CHECK(got == doctest::Approx(ceiling).epsilon(0.05));
}

TEST_CASE("same seed, same ledger and trace; other seed may differ") {
  const Scenario sc = fuzz::random_scenario(4);
  const auto a = traced(sc, 9);
  const auto b = traced(sc, 9);
  CHECK(a.ledger == b.ledger);
  CHECK(a.trace == b.trace);
  CHECK(run(sc, 9) == a.ledger);
}

TEST_CASE("ring traffic without power control matches the closed-form energy") {
  for (int n : {2, 4, 6}) {
    CAPTURE(n);
    Scenario sc = one_channel(n);
    // a whole number of frames after warmup
    sc.sim_time = 2100ms;
    sc.warmup = 300ms;
    const auto b = energy_breakdown(sc.timing, n, sc.radio);
    sc.flow_template.count = n;
    sc.flow_template.packet_size = sc.bytes_per_slot;
    sc.flow_template.interval = sc.timing.superframe / b.lambda_pkts;
    const auto l = run(sc, 1);
    double total = 0;
    for (const auto& node : l.nodes) total += node.energy_j();
    CHECK(total / n / static_cast<double>(l.superframes) == doctest::Approx(b.e_wpc).epsilon(1e-9));
  }
}

TEST_CASE("a full queue drops arrivals and every packet is accounted for") {
  Scenario sc = one_channel(2);
  sc.sim_time = 1s;
  sc.queue_limit = 5;
  sc.flows[FlowId{1}] = FlowConfig{FlowId{1}, NodeId{1}, NodeId{2}, 1000, 500us};
  const auto l = run(sc, 1);
  const auto& f = l.flows.at(0);
  CHECK(f.packets_dropped > 0);
  CHECK(f.packets_delivered > 0);
  CHECK(f.packets_delivered + f.packets_dropped <= f.packets_offered);
  CHECK(f.packets_offered - f.packets_delivered - f.packets_dropped <= sc.queue_limit);
}

TEST_CASE("worked example: late joiners, priority order and healing") {
  // N1 and N4 start out, N2 and N3 join at 150 ms, N4 leaves at 400 ms.
  Scenario sc = one_channel(6);
  sc.sim_time = 700ms;
  sc.join_idle = false;
  sc.nodes.preregistered = false;
  sc.node_overrides[NodeId{2}].start = 150ms;
  sc.node_overrides[NodeId{3}].start = 150ms;
  sc.node_overrides[NodeId{4}].leave = 400ms;
  sc.flows[FlowId{1}] = FlowConfig{FlowId{1}, NodeId{1}, NodeId{2}, 1000, 20ms};
  sc.flows[FlowId{2}] = FlowConfig{FlowId{2}, NodeId{4}, NodeId{5}, 1000, 20ms};
  sc.flows[FlowId{3}] =
      FlowConfig{FlowId{3}, NodeId{2}, NodeId{6}, 1000, 20ms, DataType::SafetyCritical};
  sc.flows[FlowId{4}] = FlowConfig{FlowId{4}, NodeId{3}, NodeId{6}, 1000, 20ms};
  const auto r = traced(sc);
  CHECK(r.violations.empty());

  const auto lines = parse_trace(r.trace);
  std::vector<std::string> order;
  std::map<std::int64_t, std::vector<std::string>> cus_by_frame;
  std::int64_t depart = -1;
  std::int64_t frame = 0;
  for (const auto& t : lines) {
    if (t.kind == "superframe") frame = t.time;
    if (t.kind == "registered") order.push_back(t.node);
    if (t.kind == "depart") depart = t.time;
    if (t.kind == "cus") cus_by_frame[frame].push_back(t.node + " " + t.rest.substr(1, t.rest.find(' ', 1) - 1));
  }
  REQUIRE(order.size() >= 4);
  CHECK(std::vector<std::string>(order.begin(), order.begin() + 4) ==
        std::vector<std::string>{"n1", "n4", "n2", "n3"});
  REQUIRE(depart > 0);

  // Before the departure the four users hold CUS 0..3 in join order; after
  // healing the survivors close the gap.
  const auto before = std::prev(cus_by_frame.lower_bound(depart))->second;
  CHECK(before == std::vector<std::string>{"n1 0", "n4 1", "n2 2", "n3 3"});
  const auto after = cus_by_frame.rbegin()->second;
  CHECK(after == std::vector<std::string>{"n1 0", "n2 1", "n3 2"});

  // N2's safety traffic outranks N1 and is served first once both are in.
  std::map<std::int64_t, std::vector<std::string>> data_by_frame;
  frame = 0;
  for (const auto& t : lines) {
    if (t.kind == "superframe") frame = t.time;
    if (t.kind == "data-tx") data_by_frame[frame].push_back(t.node);
  }
  const auto last = data_by_frame.rbegin()->second;
  REQUIRE_FALSE(last.empty());
  CHECK(last.front() == "n2");
}

TEST_CASE("a negotiated switch moves both nodes to the agreed channel") {
  Scenario sc = one_channel(3);
  sc.sim_time = 1500ms;
  sc.channels.push_back({ChannelId{2}, {}});
  sc.nodes.vacant = {ChannelId{1}, ChannelId{2}};
  sc.node_overrides[NodeId{3}].channel = ChannelId{1};
  sc.flows[FlowId{1}] = FlowConfig{FlowId{1}, NodeId{1}, NodeId{2}, 500, 10ms};
  sc.negotiations.push_back({NodeId{1}, NodeId{2}, 300ms});
  const auto r = traced(sc);
  CHECK(r.violations.empty());
  bool agreed = false;
  std::set<std::string> moved;
  std::int64_t last_on_2 = -1;
  for (const auto& t : parse_trace(r.trace)) {
    if (t.kind == "switch-agreed") agreed = true;
    if (t.kind == "move" && t.rest.find("ch2") != std::string::npos) moved.insert(t.node);
    if (t.kind == "delivered" && t.channel == "ch2") last_on_2 = t.time;
  }
  CHECK(agreed);
  CHECK(moved == std::set<std::string>{"n1", "n2"});
  CHECK(last_on_2 > 300000);
}

TEST_CASE("random scenarios never trip the invariant monitor") {
  for (std::uint64_t i = 0; i < 40; ++i) {
    CAPTURE(i);
    const auto r = run_detailed(fuzz::random_scenario(i), i + 1);
    std::string first;
    if (!r.violations.empty()) first = r.violations.front().kind + ": " + r.violations.front().detail;
    CHECK_MESSAGE(r.violations.empty(), first);
  }
}
