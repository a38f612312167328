#include "dsat/mac.hpp"

#include <algorithm>
#include <tuple>

namespace dsat {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Scanning: return "scanning";
    case Phase::Observing: return "observing";
    case Phase::Contending: return "contending";
    case Phase::Registered: return "registered";
    case Phase::Sleeping: return "sleeping";
    case Phase::Switching: return "switching";
    case Phase::Departed: return "departed";
  }
  return "unknown";
}

int slots_needed(const NodeState& node, int bytes_per_slot, int max_slots) {
  long total = node.pending_switch ? 1 : 0;
  for (const auto& q : node.queue) {
    total += (q.remaining + bytes_per_slot - 1) / bytes_per_slot;
    if (total >= max_slots) break;
  }
  return static_cast<int>(std::min<long>(total, std::max(max_slots, 0)));
}

int announced_priority(const NodeState& node, std::uint64_t superframe) {
  if (node.queue.empty()) return 0;
  const auto& head = node.queue.front();
  if (head.pi_override) return *head.pi_override;
  const auto waited = superframe - std::min(superframe, head.enqueue_superframe);
  return priority_index({head.data_type, static_cast<int>(node.queue.size()),
                         static_cast<int>(std::min<std::uint64_t>(waited, 1000))});
}

Packet build_control_packet(const NodeState& node, std::uint64_t superframe, int bytes_per_slot,
                            int max_slots, std::uint16_t tx_power_mw) {
  Packet p;
  p.source = node.id;
  p.dest = kBroadcast;
  p.tx_power_mw = std::max<std::uint16_t>(tx_power_mw, 1);
  p.body = ControlBody{static_cast<std::uint8_t>(announced_priority(node, superframe)),
                       static_cast<std::uint16_t>(slots_needed(node, bytes_per_slot, max_slots))};
  return p;
}

void heal_on_departure(CusRegistry& registry, std::span<const NodeId> silent) {
  registry.heal(silent);
}

std::optional<ChannelId> negotiate_channel_switch(
    std::span<const ChannelId> offer, std::span<const ChannelId> b_vacant,
    const std::function<int(ChannelId)>& occupancy,
    const std::function<double(ChannelId)>& pu_duty) {
  std::optional<ChannelId> best;
  std::tuple<int, double, ChannelId> best_key{};
  for (ChannelId c : offer) {
    if (std::find(b_vacant.begin(), b_vacant.end(), c) == b_vacant.end()) continue;
    const std::tuple<int, double, ChannelId> key{occupancy(c), pu_duty(c), c};
    if (!best || key < best_key) {
      best = c;
      best_key = key;
    }
  }
  return best;
}

std::optional<ChannelId> next_vacant_channel(const NodeState& node) {
  const auto& v = node.vacant;
  if (v.empty()) return std::nullopt;
  auto it = std::find(v.begin(), v.end(), node.channel);
  for (std::size_t step = 1; step <= v.size(); ++step) {
    const std::size_t base = it == v.end() ? v.size() - 1 : static_cast<std::size_t>(it - v.begin());
    const ChannelId c = v[(base + step) % v.size()];
    if (c != node.channel) return c;
  }
  return std::nullopt;
}

bool has_traffic(const NodeState& node) {
  return !node.queue.empty() || node.pending_switch.has_value();
}

BoundaryDecision on_superframe_boundary(NodeState& node, const BoundaryContext& ctx) {
  if (node.phase == Phase::Departed) return {};
  if (node.leave_requested) {
    node.phase = Phase::Departed;
    return {BoundaryAction::Leave, std::nullopt};
  }
  if (node.move_at_frame_end) {
    const ChannelId target = *node.move_at_frame_end;
    node.move_at_frame_end.reset();
    return {BoundaryAction::MoveChannel, target};
  }
  if (node.blocked_since && ctx.now - *node.blocked_since >= ctx.wait) {
    if (const auto next = next_vacant_channel(node)) return {BoundaryAction::MoveChannel, next};
  }
  if (ctx.last_frame_suspended) return {};

  const auto try_join = [&]() -> BoundaryDecision {
    if (node.fresh_on_channel) return {};
    if (!has_traffic(node) && !ctx.join_idle) return {};
    if (ctx.observed_users >= ctx.max_users) {
      if (const auto next = next_vacant_channel(node)) return {BoundaryAction::MoveChannel, next};
      return {};
    }
    node.phase = Phase::Contending;
    return {};
  };

  switch (node.phase) {
    case Phase::Scanning:
      node.phase = Phase::Observing;
      node.fresh_on_channel = true;
      return {};
    case Phase::Observing:
      return try_join();
    case Phase::Switching:
      if (node.peer_seen || ctx.now >= node.switch_deadline) return try_join();
      return {};
    case Phase::Registered:
      node.idle_frames = has_traffic(node) ? 0 : node.idle_frames + 1;
      if (ctx.sleep_after > 0 && node.idle_frames >= ctx.sleep_after) {
        node.phase = Phase::Sleeping;
        node.idle_frames = 0;
      }
      return {};
    case Phase::Sleeping:
      if (has_traffic(node)) {
        if (ctx.observed_users >= ctx.max_users) {
          if (const auto next = next_vacant_channel(node)) return {BoundaryAction::MoveChannel, next};
          return {};
        }
        node.phase = Phase::Contending;
      }
      return {};
    case Phase::Contending:
    case Phase::Departed:
      return {};
  }
  return {};
}

}  // namespace dsat
