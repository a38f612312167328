// dsatsim: run scenarios, print analytic curves, validate scenario files.
// Exit codes: 0 ok, 1 scenario/usage error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dsat/energy.hpp"
#include "dsat/metrics.hpp"
#include "dsat/scenario.hpp"
#include "dsat/simkernel.hpp"

namespace {

using namespace dsat;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

// --out wins; otherwise DSATSIM_OUT_DIR/<name>.csv; otherwise stdout.
void emit_csv(const std::string& out_path, const std::string& name, const std::string& csv) {
  if (!out_path.empty()) {
    write_text(out_path, csv);
    return;
  }
  if (const char* dir = std::getenv("DSATSIM_OUT_DIR"); dir && *dir) {
    std::filesystem::create_directories(dir);
    write_text((std::filesystem::path(dir) / (name + ".csv")).string(), csv);
    return;
  }
  std::cout << csv;
}

int simulate(const std::string& file, std::optional<std::uint64_t> seed, std::optional<int> seeds,
             int threads, const std::string& trace_path, const std::string& out_path) {
  Scenario sc = load_scenario(file);
  if (seed) {
    sc.seed = *seed;
    if (!seeds) sc.seeds = 1;
  }
  if (seeds) sc.seeds = *seeds;
  validate_scenario(sc);

  if (!trace_path.empty()) {
    Scenario first = sc;
    if (sc.sweep && !sc.sweep->values.empty()) first = apply_sweep(sc, sc.sweep->parameter, sc.sweep->values.front());
    RunOptions opt;
    opt.trace = true;
    const auto r = run_detailed(first, sc.seed, opt);
    std::string text;
    for (const auto& line : r.trace) text += line + "\n";
    write_text(trace_path, text);
  }
  emit_csv(out_path, sc.name, to_csv(run_experiment(sc, threads)));
  return 0;
}

int analytic_throughput(const std::string& file) {
  const Scenario sc = load_scenario(file);
  validate_scenario(sc);
  std::cout << "n_nodes,paper_Bps,with_ack_Bps\n";
  for (int n = 1; n <= capacity_max_users(sc.timing); ++n) {
    std::cout << n << ',' << format_double(theoretical_throughput(sc.timing, n, sc.bytes_per_slot))
              << ','
              << format_double(theoretical_throughput(sc.timing, n, sc.bytes_per_slot, ThroughputMode::WithAck))
              << '\n';
  }
  return 0;
}

int analytic_energy(const std::string& file) {
  const Scenario sc = load_scenario(file);
  validate_scenario(sc);
  std::cout << "n_nodes,data_slots,lambda,superframes_per_s,e_wpc_j,e_pc_j,p_wpc_w,p_pc_w,p_saved_w\n";
  for (int n = 2; n <= capacity_max_users(sc.timing); ++n) {
    const auto b = energy_breakdown(sc.timing, n, sc.radio);
    if (b.lambda_pkts == 0) break;
    std::cout << n << ',' << b.data_slots << ',' << b.lambda_pkts << ',' << format_double(b.xi) << ','
              << format_double(b.e_wpc) << ',' << format_double(b.e_pc_expected) << ','
              << format_double(b.p_wpc) << ',' << format_double(b.p_pc) << ',' << format_double(b.p_saved)
              << '\n';
  }
  return 0;
}

int validate_file(const std::string& file) {
  const Scenario sc = load_scenario(file);
  validate_scenario(sc);
  std::cout << file << ": ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSAT-MAC simulator"};
  app.require_subcommand(1);

  std::string file;
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  int threads = 1;
  std::string trace_path;
  std::string out_path;

  auto* sim = app.add_subcommand("simulate", "run a scenario and print CSV");
  sim->add_option("scenario", file, "scenario file")->required();
  sim->add_option("--seed", seed, "run this seed only (unless --seeds is given)");
  sim->add_option("--seeds", seeds, "number of consecutive seeds");
  sim->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  sim->add_option("--trace", trace_path, "write the event trace of the first run here");
  sim->add_option("--out", out_path, "CSV output path");

  auto* analytic = app.add_subcommand("analytic", "closed-form curves");
  analytic->require_subcommand(1);
  auto* thr = analytic->add_subcommand("throughput", "ceiling per node count");
  thr->add_option("scenario", file, "scenario file")->required();
  auto* energy = analytic->add_subcommand("energy", "power saving per node count");
  energy->add_option("scenario", file, "scenario file")->required();

  auto* val = app.add_subcommand("validate", "check a scenario file");
  val->add_option("scenario", file, "scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) return simulate(file, seed, seeds, threads, trace_path, out_path);
    if (*thr) return analytic_throughput(file);
    if (*energy) return analytic_energy(file);
    if (*val) return validate_file(file);
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
