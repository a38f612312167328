#include "dsat/ccc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "dsat/mac.hpp"

namespace dsat {

Duration ccc_airtime(const CccParams& params, int bytes) {
  const double us = static_cast<double>(bytes) * 8.0 / params.bandwidth_bps * 1e6;
  return Duration(static_cast<std::int64_t>(std::ceil(us)));
}

Duration ccc_exchange_time(const CccParams& p, int packet_bytes) {
  return ccc_airtime(p, p.rts_bytes) + p.sifs + ccc_airtime(p, p.cts_bytes) + p.sifs +
         ccc_airtime(p, packet_bytes) + p.sifs + ccc_airtime(p, p.ack_bytes);
}

namespace {

struct CNode {
  NodeSpec spec;
  std::deque<QueueEntry> queue;
  int cw = 0;
  int backoff = -1;  ///< remaining slots, -1 when not drawn
  bool departed = false;
  std::size_t metrics = 0;
};

}  // namespace

RunResult run_ccc(const Scenario& sc, std::uint64_t seed, const RunOptions& options) {
  if (sc.channels.size() != 2) throw ScenarioError(0, "ccc needs exactly two channel sections");
  const auto& p = sc.ccc;
  const ChannelId data_ch = std::max(sc.channels[0].id, sc.channels[1].id);
  const ChannelId ctrl_ch = std::min(sc.channels[0].id, sc.channels[1].id);
  const PuActivityModel data_model = find_channel(sc, data_ch)->pu;

  RunResult result;
  auto& ledger = result.ledger;
  ledger.mac = MacKind::Ccc;
  ledger.measured = sc.sim_time - sc.warmup;
  ledger.channels = {{ctrl_ch}, {data_ch}};

  PuProcess pu(data_model, make_stream(seed, RngStream::Pu, data_ch.value));
  auto rng = make_stream(seed, RngStream::Contention, ctrl_ch.value);

  std::vector<CNode> nodes;
  for (const auto& spec : expand_nodes(sc)) {
    nodes.push_back({spec, {}, p.cw_min, -1, false, ledger.nodes.size()});
    ledger.nodes.push_back({spec.id});
  }
  const auto node_of = [&](NodeId id) -> CNode* {
    for (auto& n : nodes) {
      if (n.spec.id == id) return &n;
    }
    return nullptr;
  };

  const auto flows = expand_flows(sc);
  std::vector<std::optional<SimTime>> next_arrival;
  for (const auto& f : flows) {
    ledger.flows.push_back({f.id, f.src, f.dst, f.packet_size});
    next_arrival.push_back(SimTime(f.start) < SimTime(sc.sim_time) ? std::optional(SimTime(f.start))
                                                                  : std::nullopt);
  }

  const SimTime end(sc.sim_time);
  const SimTime warmup(sc.warmup);
  const Duration slot = ccc_airtime(p, p.rts_bytes);
  const Duration cts = ccc_airtime(p, p.cts_bytes);
  const Duration ack = ccc_airtime(p, p.ack_bytes);

  const auto trace = [&](SimTime t, ChannelId ch, NodeId n, std::string_view kind, const std::string& d) {
    if (!options.trace) return;
    std::ostringstream o;
    o << t.count() << " ch" << ch.value << " n" << n.value << ' ' << kind;
    if (!d.empty()) o << ' ' << d;
    result.trace.push_back(o.str());
  };
  const auto charge = [&](CNode& n, SimTime at, double mw, Duration d, bool tx) {
    if (at < warmup) return;
    auto& m = ledger.nodes[n.metrics];
    const double j = mw * 1e-3 * static_cast<double>(d.count()) * 1e-6;
    (tx ? m.tx_j : m.rx_j) += j;
  };
  const auto present = [](const CNode& n, SimTime t) {
    return !n.departed && SimTime(n.spec.start) <= t;
  };

  SimTime now{};
  const auto catch_up = [&] {
    // arrivals in time order, ties by flow order
    for (;;) {
      std::optional<std::size_t> pick;
      for (std::size_t i = 0; i < flows.size(); ++i) {
        if (next_arrival[i] && *next_arrival[i] <= now && (!pick || *next_arrival[i] < *next_arrival[*pick])) {
          pick = i;
        }
      }
      if (!pick) break;
      const auto& f = flows[*pick];
      const SimTime at = *next_arrival[*pick];
      auto& fm = ledger.flows[*pick];
      ++fm.packets_offered;
      fm.bytes_offered += f.packet_size;
      CNode* src = node_of(f.src);
      if (src->spec.leave && SimTime(*src->spec.leave) <= at) src->departed = true;
      if (!present(*src, at) || static_cast<int>(src->queue.size()) >= sc.queue_limit) {
        ++fm.packets_dropped;
      } else {
        src->queue.push_back({f.id, f.dst, f.data_type, f.pi, f.packet_size, f.packet_size, at, 0});
      }
      const SimTime next = at + f.interval;
      next_arrival[*pick].reset();
      if ((!f.stop || next < SimTime(*f.stop)) && next < end) next_arrival[*pick] = next;
    }
    while (pu.next_change() && *pu.next_change() <= now) pu.advance();
    for (auto& n : nodes) {
      if (!n.departed && n.spec.leave && SimTime(*n.spec.leave) <= now) {
        n.departed = true;
        for (const auto& q : n.queue) {
          for (auto& f : ledger.flows) {
            if (f.flow == q.flow) ++f.packets_dropped;
          }
        }
        n.queue.clear();
      }
    }
  };
  const auto next_event = [&]() {
    SimTime t = end;
    for (const auto& a : next_arrival) {
      if (a) t = std::min(t, *a);
    }
    for (const auto& n : nodes) {
      if (SimTime(n.spec.start) > now) t = std::min(t, SimTime(n.spec.start));
    }
    return t;
  };

  while (now < end) {
    catch_up();
    std::vector<CNode*> backlogged;
    for (auto& n : nodes) {
      if (present(n, now) && !n.queue.empty()) backlogged.push_back(&n);
    }
    if (backlogged.empty()) {
      now = next_event();
      continue;
    }
    if (pu.busy()) {
      // the data channel is sensed busy; nobody starts a handshake
      now = pu.next_change() ? std::min(*pu.next_change(), end) : end;
      continue;
    }
    for (CNode* n : backlogged) {
      if (n->backoff < 0) n->backoff = static_cast<int>(rng() % static_cast<std::uint64_t>(n->cw));
    }
    const int wait = (*std::min_element(backlogged.begin(), backlogged.end(), [](const CNode* a, const CNode* b) {
                       return a->backoff < b->backoff;
                     }))->backoff;
    const SimTime rts_start = now + wait * slot;
    if (rts_start >= end) break;
    std::vector<CNode*> senders;
    for (CNode* n : backlogged) {
      n->backoff -= wait;
      if (n->backoff == 0) senders.push_back(n);
    }
    const SimTime rts_end = rts_start + slot;
    for (CNode* n : senders) charge(*n, rts_start, sc.radio.p_tx_max_mw, slot, true);

    if (senders.size() > 1) {
      if (rts_start >= warmup) ++ledger.ccc_collisions;
      for (CNode* n : senders) {
        n->cw = std::min(n->cw * 2, p.cw_max);
        n->backoff = -1;
        trace(rts_start, ctrl_ch, n->spec.id, "rts-collision", "cw=" + std::to_string(n->cw));
      }
      now = rts_end + p.sifs + cts;
      continue;
    }

    CNode& s = *senders.front();
    s.backoff = -1;
    CNode* d = node_of(s.queue.front().dest);
    if (!d || !present(*d, rts_start)) {
      s.cw = std::min(s.cw * 2, p.cw_max);
      trace(rts_start, ctrl_ch, s.spec.id, "rts-unanswered", "");
      now = rts_end + p.sifs + cts;
      continue;
    }
    auto& head = s.queue.front();
    const SimTime cts_start = rts_end + p.sifs;
    const SimTime data_start = cts_start + cts + p.sifs;
    const Duration data_len = ccc_airtime(p, head.remaining);
    const SimTime ack_start = data_start + data_len + p.sifs;
    const SimTime done = ack_start + ack;
    if (rts_start >= warmup) ++ledger.handshakes;
    charge(*d, rts_start, sc.radio.p_rx_mw, slot, false);
    charge(*d, cts_start, sc.radio.p_tx_max_mw, cts, true);
    charge(s, cts_start, sc.radio.p_rx_mw, cts, false);
    charge(s, data_start, sc.radio.p_tx_max_mw, data_len, true);
    charge(*d, data_start, sc.radio.p_rx_mw, data_len, false);
    charge(*d, ack_start, sc.radio.p_tx_max_mw, ack, true);
    charge(s, ack_start, sc.radio.p_rx_mw, ack, false);
    trace(rts_start, ctrl_ch, s.spec.id, "handshake", "to n" + std::to_string(d->spec.id.value));

    s.cw = p.cw_min;
    now = done;
    if (done > end) break;
    // a PU return during the reservation destroys the exchange
    if (pu.next_change() && *pu.next_change() < done) {
      trace(data_start, data_ch, s.spec.id, "pu-abort", "");
      continue;
    }
    trace(done, data_ch, s.spec.id, "delivered", "flow " + std::to_string(head.flow.value));
    if (done >= warmup) {
      for (auto& f : ledger.flows) {
        if (f.flow != head.flow) continue;
        ++f.packets_delivered;
        f.bytes_delivered += head.size;
        f.delay_sum_s += static_cast<double>((done - head.arrival).count()) * 1e-6;
      }
    }
    s.queue.pop_front();
  }
  return result;
}

}  // namespace dsat
