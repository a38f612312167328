#pragma once

// Transmit-power adaptation and the per-superframe energy model.
//
// Two routes compute the power a node saves by sleeping through slots that
// do not concern it and by scaling its data/ack transmit power to the peer
// distance: the closed form below, and per-event accounting through
// EnergyMeter (used by the simulation kernel and by the Monte-Carlo sampler).

#include <cstdint>
#include <random>

#include "dsat/core.hpp"

namespace dsat {

enum class FriisForm : std::uint8_t {
  Paper,     ///< denominator 4 * pi^2 * d^2 * L
  Standard,  ///< denominator (4 * pi)^2 * d^2 * L
};

/// Spatial model for node placement around the measured node.
enum class Placement : std::uint8_t {
  Ball,  ///< uniform in a 3-D ball, E[x^2] = 3R^2/5
  Disk,  ///< uniform in a 2-D disk, E[x^2] = R^2/2
};

struct RadioParams {
  double p_tx_max_mw = 1500.0;  ///< power needed to reach range_m
  double p_rx_mw = 800.0;
  double p_idle_mw = 0.0;
  double gain_tx = 1.0;
  double gain_rx = 1.0;
  double wavelength_m = 0.125;
  double loss = 1.0;
  double range_m = 250.0;
  FriisForm friis = FriisForm::Paper;
  Placement placement = Placement::Ball;

  bool operator==(const RadioParams&) const = default;
};

void validate(const RadioParams& params);

struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Position&) const = default;
};

double distance(const Position& a, const Position& b);

/// Received power in mW. Throws Error when d <= 0.
double friis_rx_power(double p_t_mw, double d_m, const RadioParams& params);

/// Inverse of friis_rx_power for a given (tx, rx) power pair.
double estimate_distance(double p_t_mw, double p_r_mw, const RadioParams& params);

/// p_tx_max * d^2 / R^2. Throws Error when d <= 0 or d > R.
double required_tx_power(double d_m, const RadioParams& params);

/// E[x^2] / R^2 for the configured placement (3/5 or 1/2).
double mean_square_fraction(Placement placement);

struct EnergyBreakdown {
  int n_nodes = 0;
  int data_slots = 0;   ///< D
  int lambda_pkts = 0;  ///< packets sent (and received) per node per superframe
  double xi = 0.0;      ///< superframes per second
  double e_wpc = 0.0;   ///< J per superframe, no power control, no sleeping
  double e_pc_expected = 0.0;
  double p_wpc = 0.0;   ///< W
  double p_pc = 0.0;
  double p_saved = 0.0;
};

/// Closed-form model for `n_nodes` registered users (C = N control slots,
/// D = capacity_max_data_slots, lambda = floor(D / N), and the superframe
/// length T_q + C*T_c + D*(T_d + T_a)).
EnergyBreakdown energy_breakdown(const FrameTiming& timing, int n_nodes, const RadioParams& params);

double energy_without_power_control(const FrameTiming& timing, int n_nodes, const RadioParams& params);

double expected_power_saved(const FrameTiming& timing, int n_nodes, const RadioParams& params);

// ---------------------------------------------------------------------------
// Per-event accounting

class EnergyMeter {
 public:
  void transmit(double power_mw, Duration d) { tx_j_ += joules(power_mw, d); }
  void receive(double power_mw, Duration d) { rx_j_ += joules(power_mw, d); }
  void idle(double power_mw, Duration d) { idle_j_ += joules(power_mw, d); }

  double tx_joules() const { return tx_j_; }
  double rx_joules() const { return rx_j_; }
  double idle_joules() const { return idle_j_; }
  double total_joules() const { return tx_j_ + rx_j_ + idle_j_; }

 private:
  static double joules(double power_mw, Duration d) {
    return power_mw * 1e-3 * static_cast<double>(d.count()) * 1e-6;
  }
  double tx_j_ = 0.0;
  double rx_j_ = 0.0;
  double idle_j_ = 0.0;
};

/// Uniform sample in the placement region of radius `radius`, by rejection
/// from the bounding cube (square for the disk).
Position sample_placement(Placement placement, double radius, std::mt19937_64& rng);

/// One superframe of the measured node, slot by slot: one CUS sent and C-1
/// received, lambda data packets sent to a peer at `data_peer_m`, lambda
/// received from a peer at `ack_peer_m` (and acked back).
struct CentralFrame {
  int control_slots = 0;
  int data_slots = 0;
  int lambda_pkts = 0;
  double data_peer_m = 0.0;
  double ack_peer_m = 0.0;
};

double account_frame(const CentralFrame& frame, const FrameTiming& timing,
                     const RadioParams& params, bool power_control);

struct MonteCarloResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
};

/// Mean of x^2 over uniform samples in the placement region.
MonteCarloResult mean_square_distance_mc(Placement placement, double radius, std::int64_t samples,
                                         std::uint64_t seed);

/// Mean power saved (W) by the measured node with peers drawn uniformly
/// in the placement region, each sample accounted slot by slot.
MonteCarloResult monte_carlo_power_saved(const FrameTiming& timing, int n_nodes,
                                         const RadioParams& params, std::int64_t samples,
                                         std::uint64_t seed);

}  // namespace dsat
