#pragma once

// Comparison MAC: slotted CSMA with RTS/CTS on a dedicated control channel
// and one licensed data channel. The lower channel id carries control, the
// higher one data. Only the data channel is subject to PU activity.

#include "dsat/scenario.hpp"
#include "dsat/simkernel.hpp"

namespace dsat {

/// Airtime of `bytes` at the configured control/data bandwidth.
Duration ccc_airtime(const CccParams& params, int bytes);

/// Handshake plus one packet and its ack, excluding backoff.
Duration ccc_exchange_time(const CccParams& params, int packet_bytes);

/// Throws ScenarioError unless the scenario declares exactly two channels.
RunResult run_ccc(const Scenario& scenario, std::uint64_t seed, const RunOptions& options = {});

}  // namespace dsat
