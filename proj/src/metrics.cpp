#include "dsat/metrics.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace dsat {

double theoretical_throughput(const FrameTiming& t, int n_nodes, int bytes_per_slot, ThroughputMode mode) {
  if (n_nodes < 0) throw Error("negative node count");
  const Duration room = t.superframe - t.quiet - n_nodes * t.control;
  if (room <= Duration::zero()) return 0.0;
  const Duration slot = mode == ThroughputMode::Paper ? t.data : t.data + t.ack;
  const double ts = static_cast<double>(t.superframe.count()) * 1e-6;
  return static_cast<double>(bytes_per_slot) * (static_cast<double>(room.count()) * 1e-6) /
         (ts * static_cast<double>(slot.count()) * 1e-6);
}

std::vector<double> fairness_ratios(const MetricsLedger& ledger) {
  if (ledger.flows.empty()) throw Error("no flows to compare");
  double total = 0.0;
  for (const auto& f : ledger.flows) total += f.throughput_Bps(ledger.measured);
  if (total <= 0.0) throw Error("no flow delivered any data");
  const double mean = total / static_cast<double>(ledger.flows.size());
  std::vector<double> out;
  for (const auto& f : ledger.flows) out.push_back(f.throughput_Bps(ledger.measured) / mean);
  return out;
}

namespace {

const char* kColumns =
    "sweep_parameter,sweep_value,seed,mac,n_nodes,n_flows,superframes,total_throughput_Bps,"
    "mean_delay_s,flow_throughput_Bps,fairness_ratios,node_energy_j,analytic_paper_Bps,"
    "analytic_with_ack_Bps,packets_delivered,packets_dropped,suspended_superframes,nus_collisions,"
    "handshakes,ccc_collisions";

template <class T, class F>
std::string joined(const std::vector<T>& items, F&& text) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ';';
    s += text(items[i]);
  }
  return s;
}

}  // namespace

std::string csv_header() {
  return std::string("# dsat-sim csv v1\n") + kColumns + "\n";
}

std::string csv_row(const ExperimentRow& r) {
  const auto& l = r.ledger;
  std::int64_t delivered = 0;
  std::int64_t dropped = 0;
  for (const auto& f : l.flows) {
    delivered += f.packets_delivered;
    dropped += f.packets_dropped;
  }
  std::int64_t suspended = 0;
  std::int64_t nus_collisions = 0;
  for (const auto& c : l.channels) {
    suspended += c.suspended;
    nus_collisions += c.nus_collisions;
  }
  std::string fairness;
  try {
    fairness = joined(fairness_ratios(l), [](double v) { return format_double(v); });
  } catch (const Error&) {
    // left empty when nothing was delivered
  }
  std::ostringstream o;
  o << r.sweep_parameter << ',' << r.sweep_value << ',' << r.seed << ','
    << (l.mac == MacKind::Dsat ? "dsat" : "ccc") << ',' << r.n_nodes << ',' << l.flows.size() << ','
    << l.superframes << ',' << format_double(l.total_throughput_Bps()) << ','
    << format_double(l.mean_delay_s()) << ','
    << joined(l.flows, [&](const FlowMetrics& f) { return format_double(f.throughput_Bps(l.measured)); })
    << ',' << fairness << ','
    << joined(l.nodes, [](const NodeMetrics& n) { return format_double(n.energy_j()); }) << ','
    << format_double(r.analytic_paper_Bps) << ',' << format_double(r.analytic_with_ack_Bps) << ','
    << delivered << ',' << dropped << ',' << suspended << ',' << nus_collisions << ',' << l.handshakes
    << ',' << l.ccc_collisions;
  return o.str();
}

std::string to_csv(const std::vector<ExperimentRow>& rows) {
  std::string s = csv_header();
  for (const auto& r : rows) s += csv_row(r) + "\n";
  return s;
}

void parallel_for(std::size_t jobs, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(jobs, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<ExperimentRow> run_experiment(const Scenario& scenario, int threads) {
  validate_scenario(scenario);
  std::vector<std::pair<std::string, std::string>> points;
  if (scenario.sweep) {
    for (const auto& v : scenario.sweep->values) points.emplace_back(scenario.sweep->parameter, v);
  } else {
    points.emplace_back("", "");
  }

  std::vector<Scenario> variants;
  for (const auto& [param, value] : points) {
    variants.push_back(param.empty() ? scenario : apply_sweep(scenario, param, value));
  }
  std::vector<ExperimentRow> rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (expand_flows(variants[p]).empty()) continue;
    for (int s = 0; s < scenario.seeds; ++s) {
      ExperimentRow r;
      r.sweep_parameter = points[p].first;
      r.sweep_value = points[p].second;
      r.seed = scenario.seed + static_cast<std::uint64_t>(s);
      r.n_nodes = static_cast<int>(expand_nodes(variants[p]).size());
      rows.push_back(std::move(r));
    }
  }
  std::vector<std::size_t> variant_of;
  for (const auto& r : rows) {
    for (std::size_t p = 0; p < points.size(); ++p) {
      if (points[p].first == r.sweep_parameter && points[p].second == r.sweep_value) {
        variant_of.push_back(p);
        break;
      }
    }
  }

  parallel_for(rows.size(), threads, [&](std::size_t i) {
    auto& r = rows[i];
    const Scenario& sc = variants[variant_of[i]];
    r.ledger = run(sc, r.seed);
    r.analytic_paper_Bps = theoretical_throughput(sc.timing, r.n_nodes, sc.bytes_per_slot, ThroughputMode::Paper);
    r.analytic_with_ack_Bps =
        theoretical_throughput(sc.timing, r.n_nodes, sc.bytes_per_slot, ThroughputMode::WithAck);
  });
  return rows;
}

}  // namespace dsat
