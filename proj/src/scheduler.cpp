#include "dsat/scheduler.hpp"

#include <algorithm>
#include <set>

namespace dsat {

bool SlotAllocation::granted(NodeId node) const {
  return slots_of(node) > 0;
}

int SlotAllocation::slots_of(NodeId node) const {
  int n = 0;
  for (const auto& g : grants) {
    if (g.node == node) n += g.n_slots;
  }
  return n;
}

int SlotAllocation::total_slots() const {
  int n = 0;
  for (const auto& g : grants) n += g.n_slots;
  return n;
}

std::optional<NodeId> SlotAllocation::owner_of(int slot) const {
  for (const auto& g : grants) {
    if (slot >= g.first_slot && slot < g.first_slot + g.n_slots) return g.node;
  }
  return std::nullopt;
}

std::optional<NodeId> SlotAllocation::first_served() const {
  if (grants.empty()) return std::nullopt;
  return grants.front().node;
}

std::map<NodeId, int> compute_ppsa(const std::optional<SlotAllocation>& prev,
                                   std::span<const NodeId> requesters) {
  std::map<NodeId, int> out;
  for (NodeId n : requesters) {
    out[n] = (prev && prev->granted(n)) ? 0 : kPpsaBoost;
  }
  return out;
}

namespace {

// Distance from the anchor in cyclic NodeId order; the node right after the
// anchor is 0 and the anchor itself sorts last.
std::uint32_t cyclic_rank(NodeId node, std::optional<NodeId> anchor) {
  if (!anchor) return node.value;
  return static_cast<std::uint16_t>(node.value - anchor->value - 1);
}

}  // namespace

SlotAllocation run_psa(std::span<const SlotRequest> requests, int max_slots,
                       std::optional<NodeId> anchor) {
  if (max_slots < 0) throw Error("psa: max_slots must be non-negative");
  std::set<NodeId> seen;
  for (const auto& r : requests) {
    if (!seen.insert(r.node).second) throw Error("psa: duplicate node in requests");
    if (r.slots_requested < 1) throw Error("psa: slots_requested must be at least 1");
    if (r.ppsa != 0 && r.ppsa != kPpsaBoost) throw Error("psa: ppsa must be 0 or 5");
    if (r.pi < 0 || r.pi > kMaxPriorityIndex) throw Error("psa: priority index out of range");
  }

  std::vector<SlotRequest> order(requests.begin(), requests.end());
  std::sort(order.begin(), order.end(), [anchor](const SlotRequest& a, const SlotRequest& b) {
    if (a.net_priority() != b.net_priority()) return a.net_priority() > b.net_priority();
    if (a.ppsa != b.ppsa) return a.ppsa > b.ppsa;
    return cyclic_rank(a.node, anchor) < cyclic_rank(b.node, anchor);
  });

  SlotAllocation out;
  int next = 0;
  for (const auto& r : order) {
    const int remaining = max_slots - next;
    if (remaining <= 0) {
      out.denied.push_back(r.node);
      continue;
    }
    const int n = std::min(remaining, r.slots_requested);
    out.grants.push_back({r.node, next, n});
    next += n;
  }
  std::sort(out.denied.begin(), out.denied.end());
  return out;
}

SlotAllocation schedule_superframe(std::span<const ScheduleInput> inputs, int max_slots,
                                   const std::optional<SlotAllocation>& prev) {
  std::vector<NodeId> nodes;
  for (const auto& in : inputs) nodes.push_back(in.node);
  const auto ppsa = compute_ppsa(prev, nodes);

  std::vector<SlotRequest> requests;
  for (const auto& in : inputs) {
    requests.push_back({in.node, in.pi, in.slots_requested, ppsa.at(in.node)});
  }
  return run_psa(requests, max_slots, prev ? prev->first_served() : std::nullopt);
}

}  // namespace dsat
