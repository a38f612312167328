#pragma once

// Per-node protocol state. The kernel owns every NodeState and drives it
// through events; the functions here make the node-local decisions (what
// to announce, whether to join, sleep, leave or switch channel).

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dsat/core.hpp"
#include "dsat/priority.hpp"
#include "dsat/scheduler.hpp"

namespace dsat {

enum class Phase : std::uint8_t {
  Scanning,    ///< tuned, waiting for the next superframe boundary
  Observing,   ///< watching one full superframe before contending
  Contending,  ///< sending in the NUS until it wins
  Registered,  ///< owns a CUS (position in its own registry view)
  Sleeping,    ///< silent, still listening and acking
  Switching,   ///< negotiated move: watching the target for the peer
  Departed,    ///< left the network
};

std::string_view to_string(Phase phase);

struct QueueEntry {
  FlowId flow;
  NodeId dest;
  DataType data_type = DataType::TextFile;
  std::optional<int> pi_override;
  int size = 0;       ///< bytes
  int remaining = 0;  ///< bytes not yet acked
  SimTime arrival{};
  std::uint64_t enqueue_superframe = 0;
};

/// Channel-control exchange the node still has to send.
struct PendingSwitch {
  NodeId peer;
  std::vector<ChannelId> offer;
};

struct NodeState {
  NodeId id;
  Phase phase = Phase::Scanning;
  ChannelId channel;
  std::vector<ChannelId> vacant;

  /// This node's own copy of the channel's CUS registry and last allocation.
  CusRegistry registry;
  bool view_valid = false;
  std::optional<SlotAllocation> prev_alloc;
  SlotAllocation alloc;
  bool alloc_valid = false;

  std::deque<QueueEntry> queue;
  std::optional<PendingSwitch> pending_switch;
  std::optional<ChannelId> move_at_frame_end;  ///< initiator's agreed channel

  ChannelId switch_target;
  NodeId switch_peer;
  SimTime switch_deadline{};
  bool peer_seen = false;

  int idle_frames = 0;
  std::optional<SimTime> blocked_since;
  bool leave_requested = false;
  bool fresh_on_channel = true;  ///< no complete observed frame yet
};

/// Slots needed to empty the queue: one per R-byte segment per packet, plus
/// one for a pending channel-control packet, capped at `max_slots`.
int slots_needed(const NodeState& node, int bytes_per_slot, int max_slots);

/// Priority index announced in the node's control packet. A fixed PI on
/// the head packet's flow wins over the calculator.
int announced_priority(const NodeState& node, std::uint64_t superframe);

Packet build_control_packet(const NodeState& node, std::uint64_t superframe, int bytes_per_slot,
                            int max_slots, std::uint16_t tx_power_mw);

/// Silent nodes leave; survivors shift down in order.
void heal_on_departure(CusRegistry& registry, std::span<const NodeId> silent);

/// Channel b chooses among a's offer: only channels b also lists as vacant,
/// then fewest registered users, then lowest PU duty cycle, then lowest id.
std::optional<ChannelId> negotiate_channel_switch(
    std::span<const ChannelId> offer, std::span<const ChannelId> b_vacant,
    const std::function<int(ChannelId)>& occupancy,
    const std::function<double(ChannelId)>& pu_duty);

/// Next entry after the current channel in the vacant list (cyclic), or
/// none when the list holds no other channel.
std::optional<ChannelId> next_vacant_channel(const NodeState& node);

struct BoundaryContext {
  SimTime now{};
  bool last_frame_suspended = false;  ///< the frame that just ended
  bool this_frame_blocked = false;    ///< PU present at this boundary
  int observed_users = 0;             ///< own registry view size
  int max_users = 0;
  int sleep_after = 3;
  bool join_idle = true;
  Duration wait{};
};

enum class BoundaryAction : std::uint8_t { Stay, Leave, MoveChannel };

struct BoundaryDecision {
  BoundaryAction action = BoundaryAction::Stay;
  std::optional<ChannelId> target;  ///< MoveChannel only
};

/// Phase transitions taken at a superframe boundary of the node's channel.
BoundaryDecision on_superframe_boundary(NodeState& node, const BoundaryContext& ctx);

/// Node wants a slot this frame: data queued, or a switch to negotiate.
bool has_traffic(const NodeState& node);

}  // namespace dsat
