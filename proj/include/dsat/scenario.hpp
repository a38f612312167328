#pragma once

// Scenario files: INI-style `key = value` lines grouped under `[section]`
// headers. parse_scenario / serialize_scenario round-trip exactly; expansion
// turns the node and flow templates plus per-id overrides into concrete
// lists for the kernels.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsat/core.hpp"
#include "dsat/energy.hpp"
#include "dsat/priority.hpp"

namespace dsat {

/// Parse or validation failure; `line` is 0 for whole-scenario checks.
class ScenarioError : public Error {
 public:
  ScenarioError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_ = 0;
};

enum class MacKind : std::uint8_t { Dsat, Ccc };

struct BusyInterval {
  Duration start{};
  Duration end{};
  bool operator==(const BusyInterval&) const = default;
};

struct PuActivityModel {
  enum class Kind : std::uint8_t { AlwaysIdle, AlwaysBusy, Scripted, Markov };
  Kind kind = Kind::AlwaysIdle;
  std::vector<BusyInterval> busy;  ///< Scripted only, sorted and disjoint
  Duration mean_on{};              ///< Markov only
  Duration mean_off{};

  /// Long-run fraction of time the PU is present.
  double duty_cycle() const;
  bool operator==(const PuActivityModel&) const = default;
};

struct ChannelConfig {
  ChannelId id;
  PuActivityModel pu;
  bool operator==(const ChannelConfig&) const = default;
};

/// Nodes 1..count share these settings unless a [node N] section overrides.
struct NodeTemplate {
  int count = 0;
  ChannelId channel{0};
  std::vector<ChannelId> vacant;  ///< empty means {channel}
  bool preregistered = true;      ///< nodes present at t=0 start registered
  bool operator==(const NodeTemplate&) const = default;
};

struct NodeOverride {
  std::optional<ChannelId> channel;
  std::optional<std::vector<ChannelId>> vacant;
  std::optional<Duration> start;
  std::optional<Duration> leave;
  std::optional<Position> position;
  bool operator==(const NodeOverride&) const = default;
};

struct NodeSpec {
  NodeId id;
  ChannelId channel;
  std::vector<ChannelId> vacant;
  Duration start{};
  std::optional<Duration> leave;
  std::optional<Position> position;
  bool operator==(const NodeSpec&) const = default;
};

struct FlowConfig {
  FlowId id;
  NodeId src;
  NodeId dst;
  int packet_size = 1000;
  Duration interval{};
  DataType data_type = DataType::TextFile;
  std::optional<int> pi;  ///< fixed priority index, overriding the calculator
  Duration start{};
  std::optional<Duration> stop;
  bool operator==(const FlowConfig&) const = default;
};

/// Flows 1..count run node i -> node (i mod n_nodes) + 1.
struct FlowTemplate {
  int count = 0;
  int packet_size = 1000;
  Duration interval{std::chrono::milliseconds(5)};
  DataType data_type = DataType::TextFile;
  std::optional<int> pi;
  Duration start{};
  bool operator==(const FlowTemplate&) const = default;
};

struct NegotiationConfig {
  NodeId a;
  NodeId b;
  Duration at{};
  bool operator==(const NegotiationConfig&) const = default;
};

struct CccParams {
  double bandwidth_bps = 1e6;
  int rts_bytes = 20;
  int cts_bytes = 14;
  int ack_bytes = 14;
  Duration sifs{10};
  int cw_min = 8;
  int cw_max = 256;
  bool operator==(const CccParams&) const = default;
};

struct SweepConfig {
  std::string parameter;
  std::vector<std::string> values;
  bool operator==(const SweepConfig&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  MacKind mac = MacKind::Dsat;
  Duration sim_time{std::chrono::seconds(10)};
  Duration warmup{};
  std::uint64_t seed = 1;
  int seeds = 5;
  int bytes_per_slot = 1000;
  int queue_limit = 100;
  int sleep_after = 3;  ///< idle frames before sleeping; 0 disables sleep
  bool join_idle = true;
  Duration pu_cycle{std::chrono::milliseconds(50)};  ///< on+off mean for duty-cycle sweeps

  FrameTiming timing{std::chrono::milliseconds(60), std::chrono::milliseconds(20),
                     std::chrono::milliseconds(1),  std::chrono::milliseconds(1),
                     std::chrono::microseconds(500), std::chrono::milliseconds(100),
                     std::chrono::milliseconds(60)};
  bool detect_follows_superframe = true;

  RadioParams radio;
  bool power_control = false;

  std::vector<ChannelConfig> channels;
  NodeTemplate nodes;
  std::map<NodeId, NodeOverride> node_overrides;
  FlowTemplate flow_template;
  std::map<FlowId, FlowConfig> flows;
  std::vector<NegotiationConfig> negotiations;
  CccParams ccc;
  std::optional<SweepConfig> sweep;

  bool operator==(const Scenario&) const = default;
};

Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::string& path);
std::string serialize_scenario(const Scenario& scenario);

/// Throws ScenarioError on dangling node/channel references, bad timing,
/// malformed PU scripts, or an unknown sweep parameter.
void validate_scenario(const Scenario& scenario);

std::vector<NodeSpec> expand_nodes(const Scenario& scenario);
std::vector<FlowConfig> expand_flows(const Scenario& scenario);
const ChannelConfig* find_channel(const Scenario& scenario, ChannelId id);

/// The closed set accepted in [sweep] parameter.
const std::vector<std::string>& sweep_parameters();

/// Copy of `scenario` with one sweep parameter set to `value`.
Scenario apply_sweep(const Scenario& scenario, const std::string& parameter,
                     const std::string& value);

Duration parse_duration(std::string_view text);
std::string format_duration(Duration d);
std::string format_double(double v);

}  // namespace dsat
