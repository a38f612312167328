#pragma once

// Discrete-event engine for DSAT-MAC runs: one global queue ordered by
// (time, kind rank, sequence), PU processes per channel, NUS contention,
// CBR traffic, energy and throughput ledgers, and an invariant monitor.

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsat/core.hpp"
#include "dsat/scenario.hpp"

namespace dsat {

/// Rank order used to break ties between events at the same instant.
enum class EventKind : std::uint8_t {
  PuStateChange = 0,
  TrafficArrival = 1,
  TimerExpiry = 2,
  PacketRxComplete = 3,
  SlotBoundary = 4,
  SuperframeBoundary = 5,
  PacketTx = 6,
};

std::string_view to_string(EventKind kind);

enum class RngStream : std::uint32_t { Contention = 1, Pu = 2, Placement = 3, Traffic = 4 };

/// Independent generator for one component, derived from (seed, stream, index).
std::mt19937_64 make_stream(std::uint64_t seed, RngStream stream, std::uint32_t index);

// ---------------------------------------------------------------------------

/// Replays or samples one channel's PU on/off process. Markov chains start
/// from a stationary draw.
class PuProcess {
 public:
  PuProcess(const PuActivityModel& model, std::mt19937_64 rng);

  bool busy() const { return busy_; }
  std::optional<SimTime> next_change() const { return next_; }
  /// Applies the pending change and schedules the one after it.
  void advance();

 private:
  SimTime hold(bool busy_state);

  PuActivityModel model_;
  std::mt19937_64 rng_;
  bool busy_ = false;
  std::optional<SimTime> next_;
  std::size_t script_pos_ = 0;
};

// ---------------------------------------------------------------------------

struct NusOutcome {
  std::optional<NodeId> winner;
  bool collision = false;
  std::vector<int> picks;  ///< sub-slot per contender, same order as the input
};

/// Each of two or more contenders picks sub-slot 0 or 1; a unique earliest
/// pick wins, anything else collides. A lone contender always wins.
NusOutcome resolve_nus_contention(std::span<const NodeId> contenders, std::mt19937_64& rng);

// ---------------------------------------------------------------------------

struct FlowMetrics {
  FlowId flow;
  NodeId src;
  NodeId dst;
  int packet_size = 0;
  std::int64_t packets_offered = 0;
  std::int64_t bytes_offered = 0;
  std::int64_t packets_dropped = 0;
  std::int64_t packets_delivered = 0;
  std::int64_t bytes_delivered = 0;
  double delay_sum_s = 0.0;

  double throughput_Bps(Duration measured) const;
  double mean_delay_s() const;
  bool operator==(const FlowMetrics&) const = default;
};

struct NodeMetrics {
  NodeId node;
  double tx_j = 0.0;
  double rx_j = 0.0;
  double idle_j = 0.0;
  std::int64_t frames_granted = 0;
  std::int64_t frames_denied = 0;
  std::int64_t slots_granted = 0;
  std::int64_t control_sent = 0;

  double energy_j() const { return tx_j + rx_j + idle_j; }
  bool operator==(const NodeMetrics&) const = default;
};

struct ChannelMetrics {
  ChannelId channel;
  std::int64_t superframes = 0;
  std::int64_t suspended = 0;
  std::int64_t nus_joins = 0;
  std::int64_t nus_collisions = 0;
  bool operator==(const ChannelMetrics&) const = default;
};

struct MetricsLedger {
  MacKind mac = MacKind::Dsat;
  Duration measured{};  ///< sim_time - warmup
  std::int64_t superframes = 0;
  std::vector<FlowMetrics> flows;
  std::vector<NodeMetrics> nodes;
  std::vector<ChannelMetrics> channels;
  std::int64_t handshakes = 0;        ///< ccc only
  std::int64_t ccc_collisions = 0;    ///< ccc only

  double total_throughput_Bps() const;
  /// Delay averaged over every delivered packet of every flow.
  double mean_delay_s() const;
  const FlowMetrics* flow(FlowId id) const;
  const NodeMetrics* node(NodeId id) const;

  bool operator==(const MetricsLedger&) const = default;
};

struct InvariantViolation {
  SimTime time{};
  std::string kind;
  std::string detail;
};

struct RunOptions {
  bool trace = false;
  bool check_invariants = true;
};

struct RunResult {
  MetricsLedger ledger;
  std::vector<std::string> trace;
  std::vector<InvariantViolation> violations;
};

/// Validates the scenario, then runs it. Dispatches to the CCC baseline when
/// the scenario selects it.
MetricsLedger run(const Scenario& scenario, std::uint64_t seed);
RunResult run_detailed(const Scenario& scenario, std::uint64_t seed, const RunOptions& options = {});

/// The DSAT kernel alone.
RunResult run_dsat(const Scenario& scenario, std::uint64_t seed, const RunOptions& options);

}  // namespace dsat
