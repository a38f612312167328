#pragma once

// Packet Scheduling Algorithm. Every node runs it on the same inputs (the
// control packets heard this superframe plus the previous allocation), so
// every node derives the same data-slot map without exchanging it.

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dsat/core.hpp"

namespace dsat {

inline constexpr int kPpsaBoost = 5;

struct SlotRequest {
  NodeId node;
  int pi = 0;
  int slots_requested = 1;
  int ppsa = 0;

  int net_priority() const { return pi + ppsa; }
};

struct SlotGrant {
  NodeId node;
  int first_slot = 0;
  int n_slots = 0;
  bool operator==(const SlotGrant&) const = default;
};

struct SlotAllocation {
  std::vector<SlotGrant> grants;  ///< contiguous runs in slot order from 0
  std::vector<NodeId> denied;     ///< ascending NodeId

  bool granted(NodeId node) const;
  int slots_of(NodeId node) const;
  int total_slots() const;
  std::optional<NodeId> owner_of(int slot) const;
  /// Node holding slot 0; anchors the cyclic tie-break of the next frame.
  std::optional<NodeId> first_served() const;

  bool operator==(const SlotAllocation&) const = default;
};

/// 0 for nodes that received at least one slot in `prev`, kPpsaBoost for
/// everyone else (including the first superframe, when prev is empty).
std::map<NodeId, int> compute_ppsa(const std::optional<SlotAllocation>& prev,
                                   std::span<const NodeId> requesters);

/// Orders requests by net priority, then PPSA (both descending), then by
/// NodeId in cyclic order starting just after `anchor` (plain ascending when
/// there is no anchor). Grants contiguous runs greedily; a request that does
/// not fit is truncated to the remaining slots, or denied when none remain.
/// Throws Error on duplicate nodes, negative max_slots, or invalid requests.
SlotAllocation run_psa(std::span<const SlotRequest> requests, int max_slots,
                       std::optional<NodeId> anchor = std::nullopt);

struct ScheduleInput {
  NodeId node;
  int pi = 0;
  int slots_requested = 1;
};

/// Convenience wrapper used by the MAC: derives PPSA and the tie-break
/// anchor from the previous allocation, then runs the PSA.
SlotAllocation schedule_superframe(std::span<const ScheduleInput> inputs, int max_slots,
                                   const std::optional<SlotAllocation>& prev);

}  // namespace dsat
