#include "dsat/simkernel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dsat/ccc.hpp"
#include "dsat/energy.hpp"
#include "dsat/mac.hpp"

namespace dsat {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::PuStateChange: return "pu";
    case EventKind::TrafficArrival: return "arrival";
    case EventKind::TimerExpiry: return "timer";
    case EventKind::PacketRxComplete: return "rx";
    case EventKind::SlotBoundary: return "slot";
    case EventKind::SuperframeBoundary: return "superframe";
    case EventKind::PacketTx: return "tx";
  }
  return "unknown";
}

std::mt19937_64 make_stream(std::uint64_t seed, RngStream stream, std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), index};
  return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// PU process

PuProcess::PuProcess(const PuActivityModel& model, std::mt19937_64 rng)
    : model_(model), rng_(std::move(rng)) {
  using K = PuActivityModel::Kind;
  switch (model_.kind) {
    case K::AlwaysIdle: busy_ = false; break;
    case K::AlwaysBusy: busy_ = true; break;
    case K::Scripted:
      if (!model_.busy.empty()) {
        next_ = SimTime(model_.busy.front().start);
        if (*next_ == SimTime::zero()) advance();
      }
      break;
    case K::Markov: {
      const double on = static_cast<double>(model_.mean_on.count());
      const double off = static_cast<double>(model_.mean_off.count());
      busy_ = std::generate_canonical<double, 53>(rng_) < on / (on + off);
      next_ = hold(busy_);
      break;
    }
  }
}

SimTime PuProcess::hold(bool busy_state) {
  const double mean = static_cast<double>((busy_state ? model_.mean_on : model_.mean_off).count());
  const double u = std::generate_canonical<double, 53>(rng_);
  const auto us = static_cast<std::int64_t>(std::llround(-mean * std::log1p(-u)));
  return SimTime(std::max<std::int64_t>(us, 1));
}

void PuProcess::advance() {
  if (!next_) return;
  const SimTime at = *next_;
  busy_ = !busy_;
  if (model_.kind == PuActivityModel::Kind::Scripted) {
    if (busy_) {
      next_ = SimTime(model_.busy[script_pos_].end);
    } else {
      ++script_pos_;
      next_.reset();
      if (script_pos_ < model_.busy.size()) next_ = SimTime(model_.busy[script_pos_].start);
    }
  } else {
    next_ = at + hold(busy_);
  }
}

// ---------------------------------------------------------------------------

NusOutcome resolve_nus_contention(std::span<const NodeId> contenders, std::mt19937_64& rng) {
  NusOutcome out;
  if (contenders.empty()) return out;
  if (contenders.size() == 1) {
    out.winner = contenders.front();
    out.picks = {0};
    return out;
  }
  for (std::size_t i = 0; i < contenders.size(); ++i) out.picks.push_back(static_cast<int>(rng() & 1u));
  for (int sub = 0; sub < 2; ++sub) {
    const auto n = std::count(out.picks.begin(), out.picks.end(), sub);
    if (n == 0) continue;
    if (n == 1) {
      const auto it = std::find(out.picks.begin(), out.picks.end(), sub);
      out.winner = contenders[static_cast<std::size_t>(it - out.picks.begin())];
    } else {
      out.collision = true;
    }
    break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ledger helpers

double FlowMetrics::throughput_Bps(Duration measured) const {
  if (measured <= Duration::zero()) return 0.0;
  return static_cast<double>(bytes_delivered) / (static_cast<double>(measured.count()) * 1e-6);
}

double FlowMetrics::mean_delay_s() const {
  return packets_delivered ? delay_sum_s / static_cast<double>(packets_delivered) : 0.0;
}

double MetricsLedger::total_throughput_Bps() const {
  double t = 0.0;
  for (const auto& f : flows) t += f.throughput_Bps(measured);
  return t;
}

double MetricsLedger::mean_delay_s() const {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& f : flows) {
    sum += f.delay_sum_s;
    n += f.packets_delivered;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

const FlowMetrics* MetricsLedger::flow(FlowId id) const {
  for (const auto& f : flows) {
    if (f.flow == id) return &f;
  }
  return nullptr;
}

const NodeMetrics* MetricsLedger::node(NodeId id) const {
  for (const auto& n : nodes) {
    if (n.node == id) return &n;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Kernel

namespace {

enum class SlotKind : int { Nus, QuietEnd, Cus, Psa, Data };
enum class TimerKind : int { Start, Leave, Negotiate };

struct Event {
  SimTime time{};
  EventKind kind{};
  std::uint64_t seq = 0;
  int a = -1;
  int b = -1;
  int c = 0;
};

struct EventLater {
  bool operator()(const Event& x, const Event& y) const {
    if (x.time != y.time) return x.time > y.time;
    if (x.kind != y.kind) return static_cast<int>(x.kind) > static_cast<int>(y.kind);
    return x.seq > y.seq;
  }
};

struct KNode {
  NodeState st;
  NodeSpec spec;
  Position pos;
  bool started = false;
  bool synced = false;
  std::optional<NodeId> follow_peer;  ///< set on the responder of a switch
  std::size_t metrics = 0;
};

struct KChannel {
  KChannel(ChannelId channel, PuProcess process) : id(channel), pu(std::move(process)) {}

  ChannelId id;
  PuProcess pu;
  SimTime pu_busy_since{};
  Duration pu_busy_total{};
  bool pu_seen = false;
  bool started = false;
  bool suspended = false;
  SimTime frame_start{};
  std::uint64_t frame_no = 0;
  CusRegistry registry;
  int c_slots = 0;
  int m_slots = 0;
  std::vector<NodeId> heard;
  std::vector<ScheduleInput> requests;
  std::optional<NodeId> winner;
  std::vector<std::pair<int, NodeId>> observed;  ///< (data slot, sender)
  std::vector<NodeId> just_left;
  SimTime last_tx_end{};
  int acks_expected = 0;
  std::mt19937_64 rng;
  std::size_t metrics = 0;
};

struct Tx {
  int from = -1;
  int to = -1;
  int channel = -1;
  Packet packet;
  int segment = 0;
  FlowId flow;
  SimTime arrival{};
  bool is_ack = false;
  std::uint64_t acked_tx = 0;
};

class Kernel {
 public:
  Kernel(const Scenario& sc, std::uint64_t seed, const RunOptions& opt);
  RunResult run();

 private:
  // setup
  void build_channels();
  void build_nodes();
  void build_flows();

  // queue
  void push(SimTime t, EventKind k, int a = -1, int b = -1, int c = 0);
  void dispatch(const Event& e);

  // handlers
  void on_pu(int ch);
  void on_arrival(int flow);
  void on_timer(int node, TimerKind kind, int index);
  void on_boundary(int ch);
  void on_nus(int ch);
  void on_quiet_end(int ch);
  void on_cus(int ch, int index);
  void on_psa(int ch);
  void on_data(int ch, int slot);
  void on_rx(std::uint64_t tx_id);
  void on_ack_tx(std::uint64_t data_tx_id);
  void finalize(KChannel& ch);

  // helpers
  int channel_index(ChannelId id) const;
  int node_index(NodeId id) const;
  bool tuned(const KNode& n, const KChannel& ch) const;
  std::vector<int> tuned_nodes(const KChannel& ch) const;
  double tx_power(const KNode& from, const KNode& to) const;
  void move_node(KNode& n, ChannelId target);
  void drop_queue(KNode& n);
  SlotAllocation reconstruct(const KChannel& ch) const;
  void charge(KNode& n, double mw, Duration d, int mode);
  void listen(const KChannel& ch, int except_a, int except_b, Duration d);
  void record_tx(KChannel& ch, SimTime start, Duration len, const KNode& n, bool exclusive);
  void violation(const std::string& kind, const std::string& detail);
  void trace(const KChannel* ch, const KNode* n, std::string_view kind, const std::string& detail);

  const Scenario& sc_;
  std::uint64_t seed_;
  RunOptions opt_;
  FrameTiming t_;
  int max_users_ = 0;

  std::vector<KChannel> channels_;
  std::vector<KNode> nodes_;
  std::vector<FlowConfig> flows_;
  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::uint64_t seq_ = 0;
  SimTime now_{};

  std::unordered_map<std::uint64_t, Tx> inflight_;
  std::uint64_t next_tx_ = 1;

  RunResult result_;
};

Kernel::Kernel(const Scenario& sc, std::uint64_t seed, const RunOptions& opt)
    : sc_(sc), seed_(seed), opt_(opt), t_(sc.timing) {
  max_users_ = capacity_max_users(t_);
  result_.ledger.mac = MacKind::Dsat;
  result_.ledger.measured = sc.sim_time - sc.warmup;
  build_channels();
  build_nodes();
  build_flows();
}

void Kernel::build_channels() {
  std::set<ChannelId> ids;
  for (const auto& c : sc_.channels) ids.insert(c.id);
  for (const auto& n : expand_nodes(sc_)) {
    ids.insert(n.channel);
    ids.insert(n.vacant.begin(), n.vacant.end());
  }
  for (ChannelId id : ids) {
    const ChannelConfig* cfg = find_channel(sc_, id);
    const PuActivityModel model = cfg ? cfg->pu : PuActivityModel{};
    KChannel ch(id, PuProcess(model, make_stream(seed_, RngStream::Pu, id.value)));
    ch.registry = CusRegistry(max_users_);
    ch.rng = make_stream(seed_, RngStream::Contention, id.value);
    ch.metrics = result_.ledger.channels.size();
    result_.ledger.channels.push_back({id});
    channels_.push_back(std::move(ch));
  }
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    auto& ch = channels_[i];
    if (ch.pu.busy()) ch.pu_busy_since = SimTime::zero();
    if (ch.pu.next_change()) push(*ch.pu.next_change(), EventKind::PuStateChange, static_cast<int>(i));
    push(SimTime::zero(), EventKind::SuperframeBoundary, static_cast<int>(i));
  }
}

void Kernel::build_nodes() {
  auto rng = make_stream(seed_, RngStream::Placement, 0);
  const auto specs = expand_nodes(sc_);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    KNode n;
    n.spec = specs[i];
    n.st.id = specs[i].id;
    n.st.channel = specs[i].channel;
    n.st.vacant = specs[i].vacant;
    n.st.registry = CusRegistry(max_users_);
    if (specs[i].position) {
      n.pos = *specs[i].position;
    } else if (i > 0) {
      n.pos = sample_placement(sc_.radio.placement, sc_.radio.range_m, rng);
    }
    n.metrics = result_.ledger.nodes.size();
    result_.ledger.nodes.push_back({specs[i].id});
    nodes_.push_back(std::move(n));
  }

  // nodes present from t=0 can start out registered, in id order per channel
  for (auto& n : nodes_) {
    if (n.spec.start == Duration::zero()) {
      n.started = true;
      if (sc_.nodes.preregistered) {
        auto& ch = channels_[static_cast<std::size_t>(channel_index(n.st.channel))];
        if (!ch.registry.full()) {
          ch.registry.append(n.st.id, 0);
          n.st.phase = Phase::Registered;
          n.st.view_valid = true;
          n.st.fresh_on_channel = false;
        }
      }
    } else {
      push(SimTime(n.spec.start), EventKind::TimerExpiry, node_index(n.st.id),
           static_cast<int>(TimerKind::Start));
    }
    if (n.spec.leave) {
      push(SimTime(*n.spec.leave), EventKind::TimerExpiry, node_index(n.st.id),
           static_cast<int>(TimerKind::Leave));
    }
  }
  for (auto& n : nodes_) {
    if (n.st.phase == Phase::Registered) {
      n.st.registry = channels_[static_cast<std::size_t>(channel_index(n.st.channel))].registry;
    }
  }
  for (std::size_t i = 0; i < sc_.negotiations.size(); ++i) {
    const auto& neg = sc_.negotiations[i];
    push(SimTime(neg.at), EventKind::TimerExpiry, node_index(neg.a),
         static_cast<int>(TimerKind::Negotiate), static_cast<int>(i));
  }
}

void Kernel::build_flows() {
  flows_ = expand_flows(sc_);
  for (std::size_t i = 0; i < flows_.size(); ++i) {
    const auto& f = flows_[i];
    result_.ledger.flows.push_back({f.id, f.src, f.dst, f.packet_size});
    if (SimTime(f.start) < SimTime(sc_.sim_time)) {
      push(SimTime(f.start), EventKind::TrafficArrival, static_cast<int>(i));
    }
  }
}

void Kernel::push(SimTime t, EventKind k, int a, int b, int c) {
  queue_.push({t, k, seq_++, a, b, c});
}

RunResult Kernel::run() {
  const SimTime end(sc_.sim_time);
  while (!queue_.empty()) {
    const Event e = queue_.top();
    if (e.time >= end) break;
    queue_.pop();
    now_ = e.time;
    dispatch(e);
  }
  for (const auto& ch : channels_) {
    if (ch.id == sc_.nodes.channel) result_.ledger.superframes = result_.ledger.channels[ch.metrics].superframes;
  }
  return std::move(result_);
}

void Kernel::dispatch(const Event& e) {
  switch (e.kind) {
    case EventKind::PuStateChange: on_pu(e.a); break;
    case EventKind::TrafficArrival: on_arrival(e.a); break;
    case EventKind::TimerExpiry: on_timer(e.a, static_cast<TimerKind>(e.b), e.c); break;
    case EventKind::PacketRxComplete: on_rx(static_cast<std::uint64_t>(e.a)); break;
    case EventKind::PacketTx: on_ack_tx(static_cast<std::uint64_t>(e.a)); break;
    case EventKind::SuperframeBoundary: on_boundary(e.a); break;
    case EventKind::SlotBoundary:
      switch (static_cast<SlotKind>(e.b)) {
        case SlotKind::Nus: on_nus(e.a); break;
        case SlotKind::QuietEnd: on_quiet_end(e.a); break;
        case SlotKind::Cus: on_cus(e.a, e.c); break;
        case SlotKind::Psa: on_psa(e.a); break;
        case SlotKind::Data: on_data(e.a, e.c); break;
      }
      break;
  }
}

// ---------------------------------------------------------------------------
// helpers

int Kernel::channel_index(ChannelId id) const {
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (channels_[i].id == id) return static_cast<int>(i);
  }
  throw Error("unknown channel " + std::to_string(id.value));
}

int Kernel::node_index(NodeId id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].st.id == id) return static_cast<int>(i);
  }
  throw Error("unknown node " + std::to_string(id.value));
}

bool Kernel::tuned(const KNode& n, const KChannel& ch) const {
  return n.started && n.synced && n.st.channel == ch.id && n.st.phase != Phase::Departed;
}

std::vector<int> Kernel::tuned_nodes(const KChannel& ch) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (tuned(nodes_[i], ch)) out.push_back(static_cast<int>(i));
  }
  return out;
}

double Kernel::tx_power(const KNode& from, const KNode& to) const {
  const auto& r = sc_.radio;
  if (!sc_.power_control) return r.p_tx_max_mw;
  const double d = distance(from.pos, to.pos);
  // outside (0, R] the node simply transmits at full power
  if (d <= 0.0 || d > r.range_m) return r.p_tx_max_mw;
  return required_tx_power(d, r);
}

std::uint16_t power_field(double mw) {
  return static_cast<std::uint16_t>(std::clamp<double>(std::llround(mw), 1.0, 65535.0));
}

constexpr int kTx = 0;
constexpr int kRx = 1;
constexpr int kIdle = 2;

void Kernel::charge(KNode& n, double mw, Duration d, int mode) {
  if (now_ < SimTime(sc_.warmup)) return;
  auto& m = result_.ledger.nodes[n.metrics];
  const double j = mw * 1e-3 * static_cast<double>(d.count()) * 1e-6;
  if (mode == kTx) m.tx_j += j;
  else if (mode == kRx) m.rx_j += j;
  else m.idle_j += j;
}

// Every tuned node other than the two given either listens (no power
// control) or sleeps through the interval.
void Kernel::listen(const KChannel& ch, int except_a, int except_b, Duration d) {
  for (int i : tuned_nodes(ch)) {
    if (i == except_a || i == except_b) continue;
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (sc_.power_control) {
      charge(n, sc_.radio.p_idle_mw, d, kIdle);
    } else {
      charge(n, sc_.radio.p_rx_mw, d, kRx);
    }
  }
}

void Kernel::record_tx(KChannel& ch, SimTime start, Duration len, const KNode& n, bool exclusive) {
  if (!opt_.check_invariants) return;
  if (exclusive) {
    if (start < ch.last_tx_end) {
      violation("slot-exclusivity", "node " + std::to_string(n.st.id.value) + " on channel " +
                                        std::to_string(ch.id.value) + " overlaps a transmission");
    }
    ch.last_tx_end = std::max(ch.last_tx_end, start + len);
    if (ch.suspended) violation("suspended-tx", "node " + std::to_string(n.st.id.value));
  }
  if (ch.pu.busy()) {
    const Duration lag = start - ch.pu_busy_since;
    if (lag > std::max(t_.superframe, t_.detect_interval)) {
      violation("pu-overlap", "node " + std::to_string(n.st.id.value) + " transmitted " +
                                  std::to_string(lag.count()) + "us into PU activity");
    }
  }
}

void Kernel::violation(const std::string& kind, const std::string& detail) {
  result_.violations.push_back({now_, kind, detail});
  trace(nullptr, nullptr, "violation", kind + " " + detail);
}

void Kernel::trace(const KChannel* ch, const KNode* n, std::string_view kind, const std::string& detail) {
  if (!opt_.trace) return;
  std::ostringstream o;
  o << now_.count() << ' ' << (ch ? "ch" + std::to_string(ch->id.value) : std::string("-")) << ' '
    << (n ? "n" + std::to_string(n->st.id.value) : std::string("-")) << ' ' << kind;
  if (!detail.empty()) o << ' ' << detail;
  result_.trace.push_back(o.str());
}

void Kernel::drop_queue(KNode& n) {
  for (const auto& q : n.st.queue) {
    for (auto& f : result_.ledger.flows) {
      if (f.flow == q.flow) ++f.packets_dropped;
    }
  }
  n.st.queue.clear();
}

void Kernel::move_node(KNode& n, ChannelId target) {
  trace(&channels_[static_cast<std::size_t>(channel_index(n.st.channel))], &n, "move",
        "to ch" + std::to_string(target.value));
  auto& st = n.st;
  st.channel = target;
  st.registry = CusRegistry(max_users_);
  st.view_valid = false;
  st.prev_alloc.reset();
  st.alloc_valid = false;
  st.fresh_on_channel = true;
  st.blocked_since.reset();
  st.idle_frames = 0;
  st.peer_seen = false;
  n.synced = false;
  if (n.follow_peer) {
    st.phase = Phase::Switching;
    st.switch_target = target;
    st.switch_peer = *n.follow_peer;
    st.switch_deadline = now_ + t_.wait;
    n.follow_peer.reset();
  } else {
    st.phase = Phase::Scanning;
  }
}

SlotAllocation Kernel::reconstruct(const KChannel& ch) const {
  SlotAllocation a;
  for (const auto& [slot, node] : ch.observed) {
    if (!a.grants.empty() && a.grants.back().node == node &&
        a.grants.back().first_slot + a.grants.back().n_slots == slot) {
      ++a.grants.back().n_slots;
    } else {
      a.grants.push_back({node, slot, 1});
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// handlers

void Kernel::on_pu(int idx) {
  auto& ch = channels_[static_cast<std::size_t>(idx)];
  const bool was_busy = ch.pu.busy();
  ch.pu.advance();
  if (ch.pu.busy() && !was_busy) {
    ch.pu_busy_since = now_;
    if (ch.started && now_ < ch.frame_start + t_.quiet) ch.pu_seen = true;
  } else if (!ch.pu.busy() && was_busy) {
    ch.pu_busy_total += now_ - ch.pu_busy_since;
  }
  trace(&ch, nullptr, "pu", ch.pu.busy() ? "busy" : "idle");
  if (ch.pu.next_change()) push(*ch.pu.next_change(), EventKind::PuStateChange, idx);
}

void Kernel::on_arrival(int idx) {
  const auto& f = flows_[static_cast<std::size_t>(idx)];
  auto& fm = result_.ledger.flows[static_cast<std::size_t>(idx)];
  auto& src = nodes_[static_cast<std::size_t>(node_index(f.src))];
  ++fm.packets_offered;
  fm.bytes_offered += f.packet_size;
  if (!src.started || src.st.phase == Phase::Departed ||
      static_cast<int>(src.st.queue.size()) >= sc_.queue_limit) {
    ++fm.packets_dropped;
  } else {
    const auto& ch = channels_[static_cast<std::size_t>(channel_index(src.st.channel))];
    src.st.queue.push_back({f.id, f.dst, f.data_type, f.pi, f.packet_size, f.packet_size, now_,
                            ch.frame_no});
  }
  const SimTime next = now_ + f.interval;
  if ((!f.stop || next < SimTime(*f.stop)) && next < SimTime(sc_.sim_time)) {
    push(next, EventKind::TrafficArrival, idx);
  }
}

void Kernel::on_timer(int idx, TimerKind kind, int index) {
  auto& n = nodes_[static_cast<std::size_t>(idx)];
  switch (kind) {
    case TimerKind::Start:
      n.started = true;
      n.synced = false;
      n.st.phase = Phase::Scanning;
      trace(nullptr, &n, "start", "ch" + std::to_string(n.st.channel.value));
      break;
    case TimerKind::Leave:
      n.st.leave_requested = true;
      trace(nullptr, &n, "leave-request", "");
      break;
    case TimerKind::Negotiate: {
      if (!n.started || n.st.phase == Phase::Departed) break;
      const auto& neg = sc_.negotiations[static_cast<std::size_t>(index)];
      std::vector<ChannelId> offer;
      for (ChannelId c : n.st.vacant) {
        if (c != n.st.channel) offer.push_back(c);
      }
      if (offer.empty()) {
        trace(nullptr, &n, "negotiate", "no other vacant channel");
        break;
      }
      n.st.pending_switch = PendingSwitch{neg.b, offer};
      trace(nullptr, &n, "negotiate", "with n" + std::to_string(neg.b.value));
      break;
    }
  }
}

void Kernel::on_boundary(int idx) {
  auto& ch = channels_[static_cast<std::size_t>(idx)];
  const bool last_suspended = ch.suspended;
  if (ch.started && !ch.suspended) finalize(ch);
  ch.just_left.clear();

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (!n.started || n.st.channel != ch.id || n.st.phase == Phase::Departed) continue;
    const bool was_synced = n.synced;
    n.synced = true;
    const bool was_registered = n.st.phase == Phase::Registered;
    BoundaryContext ctx;
    ctx.now = now_;
    ctx.last_frame_suspended = was_synced && last_suspended;
    ctx.observed_users = n.st.registry.size();
    ctx.max_users = max_users_;
    ctx.sleep_after = sc_.sleep_after;
    ctx.join_idle = sc_.join_idle;
    ctx.wait = t_.wait;
    const Phase before = n.st.phase;
    const auto d = on_superframe_boundary(n.st, ctx);
    if (d.action == BoundaryAction::Leave) {
      drop_queue(n);
      trace(&ch, &n, "depart", "");
    } else if (d.action == BoundaryAction::MoveChannel) {
      move_node(n, *d.target);
    } else if (n.st.phase != before) {
      trace(&ch, &n, "phase", std::string(to_string(n.st.phase)));
    }
    if (was_registered && n.st.phase != Phase::Registered) ch.just_left.push_back(n.st.id);
  }

  ch.started = true;
  ch.suspended = false;
  ch.frame_start = now_;
  ++ch.frame_no;
  ch.pu_seen = ch.pu.busy();
  ch.heard.clear();
  ch.requests.clear();
  ch.winner.reset();
  ch.observed.clear();
  ch.acks_expected = 0;
  ch.c_slots = ch.registry.size();
  ch.m_slots = 0;
  if (now_ >= SimTime(sc_.warmup)) ++result_.ledger.channels[ch.metrics].superframes;
  trace(&ch, nullptr, "superframe", std::to_string(ch.frame_no) + " C=" + std::to_string(ch.c_slots));

  push(now_ + t_.quiet - t_.nus(), EventKind::SlotBoundary, idx, static_cast<int>(SlotKind::Nus));
  push(now_ + t_.quiet, EventKind::SlotBoundary, idx, static_cast<int>(SlotKind::QuietEnd));
}

void Kernel::on_nus(int idx) {
  auto& ch = channels_[static_cast<std::size_t>(idx)];
  if (ch.pu_seen) return;
  std::vector<NodeId> contenders;
  for (int i : tuned_nodes(ch)) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.st.phase == Phase::Contending) contenders.push_back(n.st.id);
  }
  if (contenders.empty()) return;
  const auto outcome = resolve_nus_contention(contenders, ch.rng);
  for (std::size_t k = 0; k < contenders.size(); ++k) {
    auto& n = nodes_[static_cast<std::size_t>(node_index(contenders[k]))];
    charge(n, sc_.radio.p_tx_max_mw, t_.control, kTx);
    record_tx(ch, now_ + outcome.picks[k] * t_.control, t_.control, n, false);
  }
  auto& cm = result_.ledger.channels[ch.metrics];
  if (outcome.winner) {
    ch.winner = outcome.winner;
    auto& w = nodes_[static_cast<std::size_t>(node_index(*outcome.winner))];
    const int m = capacity_max_data_slots(t_, ch.c_slots);
    const int req = slots_needed(w.st, sc_.bytes_per_slot, m);
    if (req > 0) ch.requests.push_back({w.st.id, announced_priority(w.st, ch.frame_no), req});
    if (now_ >= SimTime(sc_.warmup)) ++cm.nus_joins;
    trace(&ch, &w, "nus-win", "of " + std::to_string(contenders.size()));
  } else if (outcome.collision) {
    if (now_ >= SimTime(sc_.warmup)) ++cm.nus_collisions;
    trace(&ch, nullptr, "nus-collision", std::to_string(contenders.size()) + " contenders");
  }
}

void Kernel::on_quiet_end(int idx) {
  auto& ch = channels_[static_cast<std::size_t>(idx)];
  if (ch.pu_seen) {
    ch.suspended = true;
    if (ch.frame_start >= SimTime(sc_.warmup)) ++result_.ledger.channels[ch.metrics].suspended;
    for (int i : tuned_nodes(ch)) {
      auto& st = nodes_[static_cast<std::size_t>(i)].st;
      if (!st.blocked_since) st.blocked_since = ch.frame_start;
    }
    trace(&ch, nullptr, "suspend", "PU present in quiet period");
    push(ch.frame_start + t_.detect_interval, EventKind::SuperframeBoundary, idx);
    return;
  }
  for (int i : tuned_nodes(ch)) nodes_[static_cast<std::size_t>(i)].st.blocked_since.reset();

  ch.m_slots = capacity_max_data_slots(t_, ch.c_slots);
  const SimTime cus0 = ch.frame_start + t_.quiet;
  for (int i = 0; i < ch.c_slots; ++i) {
    push(cus0 + i * t_.control, EventKind::SlotBoundary, idx, static_cast<int>(SlotKind::Cus), i);
  }
  const SimTime data0 = cus0 + ch.c_slots * t_.control;
  push(data0, EventKind::SlotBoundary, idx, static_cast<int>(SlotKind::Psa));
  for (int j = 0; j < ch.m_slots; ++j) {
    push(data0 + j * t_.data_slot_cost(), EventKind::SlotBoundary, idx, static_cast<int>(SlotKind::Data), j);
  }
  push(ch.frame_start + t_.superframe, EventKind::SuperframeBoundary, idx);
}

void Kernel::on_cus(int idx, int position) {
  auto& ch = channels_[static_cast<std::size_t>(idx)];
  const auto listeners = tuned_nodes(ch);
  std::vector<int> senders;
  for (int i : listeners) {
    const auto& st = nodes_[static_cast<std::size_t>(i)].st;
    if (st.phase == Phase::Registered && st.registry.position_of(st.id) == position) senders.push_back(i);
  }
  for (int i : senders) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    const int m = capacity_max_data_slots(t_, n.st.registry.size());
    const Packet p = build_control_packet(n.st, ch.frame_no, sc_.bytes_per_slot, m,
                                          power_field(sc_.radio.p_tx_max_mw));
    const auto& body = std::get<ControlBody>(p.body);
    record_tx(ch, now_, t_.control, n, true);
    charge(n, sc_.radio.p_tx_max_mw, t_.control, kTx);
    ch.heard.push_back(n.st.id);
    if (body.slots_requested > 0) {
      ch.requests.push_back({n.st.id, body.priority_index, body.slots_requested});
    }
    if (now_ >= SimTime(sc_.warmup)) ++result_.ledger.nodes[n.metrics].control_sent;
    trace(&ch, &n, "cus", std::to_string(position) + " pi=" + std::to_string(body.priority_index) +
                              " req=" + std::to_string(body.slots_requested));
  }
  // control slots are listened to with or without power control
  for (int i : listeners) {
    if (std::find(senders.begin(), senders.end(), i) != senders.end()) continue;
    charge(nodes_[static_cast<std::size_t>(i)], sc_.radio.p_rx_mw, t_.control, kRx);
  }
}

void Kernel::on_psa(int idx) {
  auto& ch = channels_[static_cast<std::size_t>(idx)];
  for (int i : tuned_nodes(ch)) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    auto& st = n.st;
    if (!st.view_valid) continue;
    const int m = capacity_max_data_slots(t_, st.registry.size());
    st.alloc = schedule_superframe(ch.requests, m, st.prev_alloc);
    st.alloc_valid = true;

    const bool requested = std::any_of(ch.requests.begin(), ch.requests.end(),
                                       [&](const ScheduleInput& r) { return r.node == st.id; });
    if (requested && now_ >= SimTime(sc_.warmup)) {
      auto& nm = result_.ledger.nodes[n.metrics];
      const int got = st.alloc.slots_of(st.id);
      if (got > 0) {
        ++nm.frames_granted;
        nm.slots_granted += got;
      } else {
        ++nm.frames_denied;
      }
    }
    if (opt_.check_invariants && st.phase == Phase::Registered && !ch.requests.empty() && m > 0 &&
        st.alloc.grants.empty()) {
      violation("orphan-slots", "requests pending but nothing granted");
    }
  }
  trace(&ch, nullptr, "psa", std::to_string(ch.requests.size()) + " requests M=" + std::to_string(ch.m_slots));
}

void Kernel::on_data(int idx, int slot) {
  auto& ch = channels_[static_cast<std::size_t>(idx)];
  std::vector<int> senders;
  for (int i : tuned_nodes(ch)) {
    const auto& st = nodes_[static_cast<std::size_t>(i)].st;
    if ((st.phase == Phase::Registered || st.phase == Phase::Contending) && st.alloc_valid &&
        st.alloc.owner_of(slot) == st.id) {
      senders.push_back(i);
    }
  }

  bool sent = false;
  for (int i : senders) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    Tx tx;
    tx.from = i;
    tx.channel = idx;
    if (n.st.pending_switch) {
      tx.to = node_index(n.st.pending_switch->peer);
      tx.packet.body = ChannelControlBody{n.st.pending_switch->offer};
    } else if (!n.st.queue.empty()) {
      const auto& head = n.st.queue.front();
      tx.to = node_index(head.dest);
      tx.segment = std::min(head.remaining, sc_.bytes_per_slot);
      tx.flow = head.flow;
      tx.arrival = head.arrival;
      tx.packet.body = DataBody{static_cast<std::uint32_t>(tx.segment)};
    } else {
      trace(&ch, &n, "idle-grant", std::to_string(slot));
      continue;
    }
    auto& dest = nodes_[static_cast<std::size_t>(tx.to)];
    const double power = tx_power(n, dest);
    tx.packet.source = n.st.id;
    tx.packet.dest = dest.st.id;
    tx.packet.tx_power_mw = power_field(power);

    record_tx(ch, now_, t_.data, n, true);
    charge(n, power, t_.data, kTx);
    if (sc_.power_control && tuned(dest, ch)) charge(dest, sc_.radio.p_rx_mw, t_.data, kRx);
    listen(ch, i, sc_.power_control && tuned(dest, ch) ? tx.to : -1, t_.data);
    ch.observed.emplace_back(slot, n.st.id);
    trace(&ch, &n, "data-tx", "slot " + std::to_string(slot) + " to n" + std::to_string(dest.st.id.value) +
                                  " " + to_string(tx.packet.indicator()));

    const std::uint64_t id = next_tx_++;
    inflight_.emplace(id, std::move(tx));
    push(now_ + t_.data, EventKind::PacketRxComplete, static_cast<int>(id));
    sent = true;
  }
  if (!sent) listen(ch, -1, -1, t_.data_slot_cost());
}

void Kernel::on_rx(std::uint64_t id) {
  auto it = inflight_.find(id);
  if (it == inflight_.end()) return;
  Tx tx = std::move(it->second);
  inflight_.erase(it);
  auto& ch = channels_[static_cast<std::size_t>(tx.channel)];
  auto& from = nodes_[static_cast<std::size_t>(tx.from)];
  auto& to = nodes_[static_cast<std::size_t>(tx.to)];

  if (tx.is_ack) {
    if (!tuned(to, ch)) return;
    const auto& body = std::get<AckBody>(tx.packet.body);
    if (body.acked_kind == AckedKind::ChannelControl) {
      to.st.pending_switch.reset();
      if (body.agreed_channel) {
        to.st.move_at_frame_end = body.agreed_channel;
        trace(&ch, &to, "switch-agreed", "ch" + std::to_string(body.agreed_channel->value));
      } else {
        trace(&ch, &to, "switch-refused", "");
      }
      return;
    }
    auto& q = to.st.queue;
    if (q.empty() || q.front().flow != tx.flow || q.front().arrival != tx.arrival) {
      violation("ack-pairing", "ack does not match the head packet of n" + std::to_string(to.st.id.value));
      return;
    }
    q.front().remaining -= tx.segment;
    if (q.front().remaining <= 0) {
      const auto entry = q.front();
      q.pop_front();
      if (now_ >= SimTime(sc_.warmup)) {
        for (auto& f : result_.ledger.flows) {
          if (f.flow != entry.flow) continue;
          ++f.packets_delivered;
          f.bytes_delivered += entry.size;
          f.delay_sum_s += static_cast<double>((now_ - entry.arrival).count()) * 1e-6;
        }
      }
      trace(&ch, &to, "delivered", "flow " + std::to_string(entry.flow.value));
    }
    return;
  }

  if (!tuned(to, ch)) {
    // nobody answers; the sender still listens for the ack
    if (sc_.power_control) {
      charge(from, sc_.radio.p_rx_mw, t_.ack, kRx);
      listen(ch, tx.from, -1, t_.ack);
    } else {
      listen(ch, -1, -1, t_.ack);
    }
    trace(&ch, &from, "no-ack", "n" + std::to_string(to.st.id.value) + " not on channel");
    return;
  }

  if (std::holds_alternative<ChannelControlBody>(tx.packet.body)) {
    const auto& offer = std::get<ChannelControlBody>(tx.packet.body).channel_list;
    std::optional<ChannelId> choice;
    if (!to.st.move_at_frame_end && !to.st.leave_requested) {
      std::vector<ChannelId> mine;
      for (ChannelId c : to.st.vacant) {
        if (c != to.st.channel) mine.push_back(c);
      }
      choice = negotiate_channel_switch(
          offer, mine,
          [&](ChannelId c) { return channels_[static_cast<std::size_t>(channel_index(c))].registry.size(); },
          [&](ChannelId c) {
            const auto& k = channels_[static_cast<std::size_t>(channel_index(c))];
            Duration busy = k.pu_busy_total;
            if (k.pu.busy()) busy += now_ - k.pu_busy_since;
            return now_.count() > 0 ? static_cast<double>(busy.count()) / static_cast<double>(now_.count())
                                    : 0.0;
          });
    }
    if (choice) {
      to.st.move_at_frame_end = choice;
      to.follow_peer = from.st.id;
    }
    tx.packet = Packet{to.st.id, from.st.id, 1, AckBody{AckedKind::ChannelControl, choice}};
  }
  ++ch.acks_expected;
  const std::uint64_t nid = next_tx_++;
  inflight_.emplace(nid, std::move(tx));
  push(now_, EventKind::PacketTx, static_cast<int>(nid));
}

void Kernel::on_ack_tx(std::uint64_t data_id) {
  auto it = inflight_.find(data_id);
  if (it == inflight_.end()) return;
  Tx data = std::move(it->second);
  inflight_.erase(it);
  auto& ch = channels_[static_cast<std::size_t>(data.channel)];
  auto& sender = nodes_[static_cast<std::size_t>(data.from)];
  auto& acker = nodes_[static_cast<std::size_t>(data.to)];
  --ch.acks_expected;

  Tx ack;
  ack.from = data.to;
  ack.to = data.from;
  ack.channel = data.channel;
  ack.is_ack = true;
  ack.segment = data.segment;
  ack.flow = data.flow;
  ack.arrival = data.arrival;
  if (std::holds_alternative<AckBody>(data.packet.body)) {
    ack.packet = data.packet;  // channel-control reply prepared on receipt
  } else {
    ack.packet = Packet{acker.st.id, sender.st.id, 1, AckBody{AckedKind::Data, std::nullopt}};
  }
  const double power = tx_power(acker, sender);
  ack.packet.tx_power_mw = power_field(power);

  record_tx(ch, now_, t_.ack, acker, true);
  charge(acker, power, t_.ack, kTx);
  if (sc_.power_control) charge(sender, sc_.radio.p_rx_mw, t_.ack, kRx);
  listen(ch, data.to, sc_.power_control ? data.from : -1, t_.ack);
  trace(&ch, &acker, "ack-tx", "to n" + std::to_string(sender.st.id.value) + " " +
                                   to_string(ack.packet.indicator()));

  const std::uint64_t id = next_tx_++;
  inflight_.emplace(id, std::move(ack));
  push(now_ + t_.ack, EventKind::PacketRxComplete, static_cast<int>(id));
}

void Kernel::finalize(KChannel& ch) {
  const auto is_heard = [&](NodeId n) {
    return std::find(ch.heard.begin(), ch.heard.end(), n) != ch.heard.end();
  };
  const auto silent_of = [&](const CusRegistry& reg) {
    std::vector<NodeId> silent;
    for (NodeId m : reg.members()) {
      if (!is_heard(m)) silent.push_back(m);
    }
    return silent;
  };

  const auto silent = silent_of(ch.registry);
  heal_on_departure(ch.registry, silent);
  for (NodeId h : ch.heard) ch.registry.mark_heard(h, ch.frame_no);
  if (ch.winner && !ch.registry.contains(*ch.winner)) ch.registry.append(*ch.winner, ch.frame_no);
  if (!silent.empty()) trace(&ch, nullptr, "heal", std::to_string(silent.size()) + " silent");

  for (int i : tuned_nodes(ch)) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    auto& st = n.st;
    if (st.view_valid) {
      const auto own_silent = silent_of(st.registry);
      heal_on_departure(st.registry, own_silent);
      for (NodeId h : ch.heard) st.registry.mark_heard(h, ch.frame_no);
      if (ch.winner && !st.registry.contains(*ch.winner)) st.registry.append(*ch.winner, ch.frame_no);
      if (st.alloc_valid) st.prev_alloc = st.alloc;
    } else {
      st.registry = CusRegistry(max_users_);
      for (NodeId h : ch.heard) st.registry.append(h, ch.frame_no);
      if (ch.winner) st.registry.append(*ch.winner, ch.frame_no);
      st.prev_alloc = reconstruct(ch);
      st.view_valid = true;
    }
    st.fresh_on_channel = false;
    st.alloc_valid = false;
    if (st.phase == Phase::Switching && (is_heard(st.switch_peer) || ch.winner == st.switch_peer)) {
      st.peer_seen = true;
    }
    if (ch.winner == st.id && st.phase == Phase::Contending) {
      st.phase = Phase::Registered;
      st.idle_frames = 0;
      trace(&ch, &n, "registered", "cus " + std::to_string(*st.registry.position_of(st.id)));
    }
  }

  if (!opt_.check_invariants) return;
  for (int i : tuned_nodes(ch)) {
    const auto& st = nodes_[static_cast<std::size_t>(i)].st;
    if (st.phase == Phase::Registered && st.registry.members() != ch.registry.members()) {
      violation("registry-consistency", "n" + std::to_string(st.id.value) + " disagrees on channel " +
                                            std::to_string(ch.id.value));
    }
    if (st.phase == Phase::Registered && st.registry.position_of(st.id) == std::nullopt) {
      violation("registry-consistency", "n" + std::to_string(st.id.value) + " registered without a CUS");
    }
  }
  for (NodeId gone : ch.just_left) {
    bool still = ch.registry.contains(gone) && gone != ch.winner;
    for (int i : tuned_nodes(ch)) {
      const auto& st = nodes_[static_cast<std::size_t>(i)].st;
      if (st.phase == Phase::Registered && st.registry.contains(gone) && gone != ch.winner) still = true;
    }
    if (still) violation("healing", "n" + std::to_string(gone.value) + " still holds a CUS after one frame");
  }
  if (ch.acks_expected != 0) violation("ack-pairing", "unanswered data on channel " + std::to_string(ch.id.value));
}

}  // namespace

RunResult run_dsat(const Scenario& scenario, std::uint64_t seed, const RunOptions& options) {
  Kernel k(scenario, seed, options);
  return k.run();
}

RunResult run_detailed(const Scenario& scenario, std::uint64_t seed, const RunOptions& options) {
  validate_scenario(scenario);
  if (scenario.mac == MacKind::Ccc) return run_ccc(scenario, seed, options);
  return run_dsat(scenario, seed, options);
}

MetricsLedger run(const Scenario& scenario, std::uint64_t seed) {
  RunOptions opt;
  opt.check_invariants = false;
  return run_detailed(scenario, seed, opt).ledger;
}

}  // namespace dsat
