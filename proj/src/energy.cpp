#include "dsat/energy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dsat {

void validate(const RadioParams& p) {
  if (!(p.p_tx_max_mw > 0.0)) throw Error("radio: p_tx_max must be positive");
  if (!(p.p_rx_mw > 0.0)) throw Error("radio: p_rx must be positive");
  if (p.p_idle_mw < 0.0) throw Error("radio: p_idle must be non-negative");
  if (!(p.gain_tx > 0.0) || !(p.gain_rx > 0.0)) throw Error("radio: antenna gains must be positive");
  if (!(p.wavelength_m > 0.0)) throw Error("radio: wavelength must be positive");
  if (!(p.loss >= 1.0)) throw Error("radio: loss must be at least 1");
  if (!(p.range_m > 0.0)) throw Error("radio: range must be positive");
}

double distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

namespace {

double friis_denominator(FriisForm form) {
  constexpr double pi = std::numbers::pi;
  return form == FriisForm::Paper ? 4.0 * pi * pi : 16.0 * pi * pi;
}

}  // namespace

double friis_rx_power(double p_t_mw, double d_m, const RadioParams& p) {
  if (!(d_m > 0.0)) throw Error("friis: distance must be positive");
  return p_t_mw * p.gain_tx * p.gain_rx * p.wavelength_m * p.wavelength_m /
         (friis_denominator(p.friis) * d_m * d_m * p.loss);
}

double estimate_distance(double p_t_mw, double p_r_mw, const RadioParams& p) {
  if (!(p_t_mw > 0.0) || !(p_r_mw > 0.0)) throw Error("friis: powers must be positive");
  return std::sqrt(p_t_mw * p.gain_tx * p.gain_rx * p.wavelength_m * p.wavelength_m /
                   (friis_denominator(p.friis) * p_r_mw * p.loss));
}

double required_tx_power(double d_m, const RadioParams& p) {
  if (!(d_m > 0.0)) throw Error("required_tx_power: distance must be positive");
  if (d_m > p.range_m) throw Error("required_tx_power: peer is out of range");
  return p.p_tx_max_mw * d_m * d_m / (p.range_m * p.range_m);
}

double mean_square_fraction(Placement placement) {
  return placement == Placement::Ball ? 3.0 / 5.0 : 1.0 / 2.0;
}

namespace {

double seconds(Duration d) {
  return static_cast<double>(d.count()) * 1e-6;
}

}  // namespace

EnergyBreakdown energy_breakdown(const FrameTiming& t, int n_nodes, const RadioParams& p) {
  if (n_nodes < 1) throw Error("energy: n_nodes must be at least 1");
  EnergyBreakdown b;
  b.n_nodes = n_nodes;
  b.data_slots = capacity_max_data_slots(t, n_nodes);
  b.lambda_pkts = b.data_slots / n_nodes;

  const double tc = seconds(t.control);
  const double td = seconds(t.data);
  const double ta = seconds(t.ack);
  const double ptx = p.p_tx_max_mw * 1e-3;
  const double prx = p.p_rx_mw * 1e-3;
  const double c = n_nodes;
  const double d = b.data_slots;
  const double lam = b.lambda_pkts;

  b.xi = 1.0 / (seconds(t.quiet) + c * tc + d * (td + ta));
  b.e_wpc = ptx * (tc + lam * td + lam * ta) + prx * ((c - 1) * tc + (d - lam) * td + (d - lam) * ta);
  b.e_pc_expected = ptx * tc + mean_square_fraction(p.placement) * ptx * (lam * td + lam * ta) +
                    prx * ((c - 1) * tc + lam * td + lam * ta);
  b.p_wpc = b.e_wpc * b.xi;
  b.p_pc = b.e_pc_expected * b.xi;
  b.p_saved = (1.0 - mean_square_fraction(p.placement)) * b.xi * lam * ptx * (td + ta) +
              (d - 2 * lam) * b.xi * prx * (td + ta);
  return b;
}

double energy_without_power_control(const FrameTiming& t, int n_nodes, const RadioParams& p) {
  return energy_breakdown(t, n_nodes, p).e_wpc;
}

double expected_power_saved(const FrameTiming& t, int n_nodes, const RadioParams& p) {
  return energy_breakdown(t, n_nodes, p).p_saved;
}

// ---------------------------------------------------------------------------

Position sample_placement(Placement placement, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-radius, radius);
  const double r2 = radius * radius;
  for (;;) {
    Position pos{u(rng), u(rng), 0.0};
    if (placement == Placement::Ball) pos.z = u(rng);
    if (pos.x * pos.x + pos.y * pos.y + pos.z * pos.z <= r2) return pos;
  }
}

double account_frame(const CentralFrame& f, const FrameTiming& t, const RadioParams& p,
                     bool power_control) {
  EnergyMeter meter;
  for (int c = 0; c < f.control_slots; ++c) {
    if (c == 0) {
      meter.transmit(p.p_tx_max_mw, t.control);
    } else {
      meter.receive(p.p_rx_mw, t.control);
    }
  }

  const auto tx_power = [&](double d) {
    if (!power_control) return p.p_tx_max_mw;
    return d > p.range_m ? p.p_tx_max_mw : required_tx_power(d, p);
  };

  // Slots [0, lambda) are ours; [lambda, 2*lambda) carry data addressed to us.
  for (int j = 0; j < f.data_slots; ++j) {
    const bool own = j < f.lambda_pkts;
    const bool inbound = !own && j < 2 * f.lambda_pkts;
    if (own) {
      meter.transmit(tx_power(f.data_peer_m), t.data);
      meter.receive(p.p_rx_mw, t.ack);
    } else if (inbound) {
      meter.receive(p.p_rx_mw, t.data);
      meter.transmit(tx_power(f.ack_peer_m), t.ack);
    } else if (!power_control) {
      meter.receive(p.p_rx_mw, t.data);
      meter.receive(p.p_rx_mw, t.ack);
    }
  }
  return meter.total_joules();
}

MonteCarloResult mean_square_distance_mc(Placement placement, double radius, std::int64_t samples,
                                         std::uint64_t seed) {
  if (samples < 2) throw Error("monte carlo: need at least 2 samples");
  std::mt19937_64 rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::int64_t i = 0; i < samples; ++i) {
    const Position pos = sample_placement(placement, radius, rng);
    const double x2 = pos.x * pos.x + pos.y * pos.y + pos.z * pos.z;
    sum += x2;
    sum_sq += x2 * x2;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = (sum_sq - n * mean * mean) / (n - 1);
  return {mean, std::sqrt(std::max(var, 0.0) / n), samples};
}

MonteCarloResult monte_carlo_power_saved(const FrameTiming& t, int n_nodes, const RadioParams& p,
                                         std::int64_t samples, std::uint64_t seed) {
  if (samples < 2) throw Error("monte carlo: need at least 2 samples");
  const EnergyBreakdown b = energy_breakdown(t, n_nodes, p);
  std::mt19937_64 rng(seed);
  const Position origin{};
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::int64_t i = 0; i < samples; ++i) {
    CentralFrame f;
    f.control_slots = n_nodes;
    f.data_slots = b.data_slots;
    f.lambda_pkts = b.lambda_pkts;
    f.data_peer_m = distance(origin, sample_placement(p.placement, p.range_m, rng));
    f.ack_peer_m = distance(origin, sample_placement(p.placement, p.range_m, rng));
    if (f.data_peer_m <= 0.0) f.data_peer_m = p.range_m;
    if (f.ack_peer_m <= 0.0) f.ack_peer_m = p.range_m;
    const double saved = (account_frame(f, t, p, false) - account_frame(f, t, p, true)) * b.xi;
    sum += saved;
    sum_sq += saved * saved;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = (sum_sq - n * mean * mean) / (n - 1);
  return {mean, std::sqrt(std::max(var, 0.0) / n), samples};
}

}  // namespace dsat
