#pragma once

// Analytic throughput, fairness ratios, and the multi-seed experiment
// driver that turns a scenario (and its sweep) into CSV rows.

#include <functional>
#include <string>
#include <vector>

#include "dsat/scenario.hpp"
#include "dsat/simkernel.hpp"

namespace dsat {

enum class ThroughputMode : std::uint8_t {
  Paper,    ///< slot cost T_d
  WithAck,  ///< slot cost T_d + T_a, as in the capacity bound
};

/// R(T_s - T_q - N T_c) / (T_s * slot cost), in bytes/s. Zero once the
/// control slots fill the frame. Throws Error for a negative node count.
double theoretical_throughput(const FrameTiming& timing, int n_nodes, int bytes_per_slot,
                              ThroughputMode mode = ThroughputMode::Paper);

/// Each flow's throughput over the mean flow throughput, in flow order.
/// Throws Error when nothing was delivered or there are no flows.
std::vector<double> fairness_ratios(const MetricsLedger& ledger);

struct ExperimentRow {
  std::string sweep_parameter;  ///< empty without a sweep
  std::string sweep_value;
  std::uint64_t seed = 0;
  int n_nodes = 0;
  MetricsLedger ledger;
  double analytic_paper_Bps = 0.0;
  double analytic_with_ack_Bps = 0.0;
};

/// Header lines (schema comment plus column names), newline-terminated.
std::string csv_header();
std::string csv_row(const ExperimentRow& row);

/// One run per (sweep value, seed) with seeds seed..seed+seeds-1. Rows come
/// back ordered by (sweep value, seed) whatever the thread count. A
/// scenario without flows produces no rows.
std::vector<ExperimentRow> run_experiment(const Scenario& scenario, int threads = 1);

/// Runs `jobs` on up to `threads` workers; job i writes only slot i.
void parallel_for(std::size_t jobs, int threads, const std::function<void(std::size_t)>& body);

std::string to_csv(const std::vector<ExperimentRow>& rows);

}  // namespace dsat
