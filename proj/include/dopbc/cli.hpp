#pragma once

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dopbc/harness.hpp"

namespace dopbc::cli {

namespace detail {

inline double snap(double v) { return std::abs(v) < 1e-13 ? 0.0 : v; }

inline void print_slope(std::ostream& out, std::string_view label, const SlopeRow& row) {
  out << label << ' ' << row.metric << " exponent=" << format_real(row.fit.exponent)
      << " r2=" << format_real(row.fit.r_squared);
  if (!row.fit.flag.empty()) out << " flag=" << row.fit.flag;
  out << '\n';
}

inline void print_sweep(std::ostream& out, const SweepResult& s) {
  for (const auto& r : s.runs)
    out << "T=" << r.horizon << " regret_a=" << format_real(r.regret_a) << " ccv_1=" << format_real(r.ccv_a.front())
        << " delta_sum=" << format_real(r.delta.sum) << '\n';
  for (const auto& row : s.slopes) print_slope(out, "slope", row);
}

inline int spectral(std::ostream& out, const std::string& topology, int n, const std::string& scheme_name,
                    double radius, std::uint64_t seed, const std::string& csv) {
  const auto kind = parse_topology(topology);
  if (!kind) throw ValidationError("--topology", "unknown topology '" + topology + "'");
  // Unset scheme: exact averaging on complete graphs, lazy Metropolis elsewhere.
  const auto scheme = scheme_name.empty()
                          ? std::optional(*kind == TopologyKind::complete ? MixingScheme::uniform_average
                                                                           : MixingScheme::lazy_metropolis)
                          : parse_mixing(scheme_name);
  if (!scheme) throw ValidationError("--scheme", "unknown scheme '" + scheme_name + "'");
  if (n < 1) throw ValidationError("--n", "must be at least 1");
  const Graph g = build_graph(TopologySpec{*kind, radius, seed}, n);
  const MixingMatrix mix = build_mixing(g, *scheme);
  const Vector eig = mix.eigenvalues();
  out << "sigma=" << format_real(snap(mix.sigma())) << '\n'
      << "spectral_gap=" << format_real(snap(1.0 - mix.sigma())) << '\n'
      << "eigen_max=" << format_real(snap(eig(0))) << '\n'
      << "eigen_min=" << format_real(snap(eig(eig.size() - 1))) << '\n'
      << "edges=" << g.edges().size() << '\n';
  if (g.final_radius) out << "radius=" << format_real(*g.final_radius) << '\n';
  if (!csv.empty()) {
    std::ofstream f(csv, std::ios::binary);
    if (!f) throw Error("cannot write " + csv);
    write_matrix_csv(f, mix.weights());
  }
  return 0;
}

inline std::vector<int> parse_horizons(const std::string& text) {
  return config_detail::parse_int_list("--horizons", text);
}

}  // namespace detail

// Entry point for the `dopbc` binary. Exit 0 on success, 1 on usage or
// validation errors, 2 on runtime errors.
inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed online primal-dual with belief consensus"};
  app.name("dopbc");
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, horizons_text, topology, scheme, csv;
  int n = 0;
  double radius = 0.5;
  std::uint64_t topo_seed = 0;

  auto* run_cmd = app.add_subcommand("run", "Run every configured horizon and write CSVs");
  run_cmd->add_option("--config", config_path, "Config file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory (overrides output.dir)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a horizon sweep and fit growth exponents");
  sweep_cmd->add_option("--config", config_path, "Config file")->required();
  sweep_cmd->add_option("--horizons", horizons_text, "Comma-separated horizons (overrides config)");
  sweep_cmd->add_option("--out", out_dir, "Output directory (overrides output.dir)");

  auto* spectral_cmd = app.add_subcommand("spectral", "Print sigma and the eigenvalue summary of a mixing matrix");
  spectral_cmd->add_option("--topology", topology, "complete|ring|path|star|random-geometric")->required();
  spectral_cmd->add_option("--n", n, "Number of agents")->required();
  spectral_cmd->add_option("--scheme", scheme, "lazy-metropolis|uniform-average (default: uniform-average on complete graphs)");
  spectral_cmd->add_option("--radius", radius, "Connection radius for random-geometric");
  spectral_cmd->add_option("--seed", topo_seed, "Seed for random-geometric");
  spectral_cmd->add_option("--csv", csv, "Write the weight matrix to this CSV file");

  auto* check_cmd = app.add_subcommand("check", "Validate oracles and run the invariant suite");
  check_cmd->add_option("--config", config_path, "Config file")->required();

  auto* compare_cmd = app.add_subcommand("compare", "DOPBC vs the decision-sharing baseline");
  compare_cmd->add_option("--config", config_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (spectral_cmd->parsed()) return detail::spectral(out, topology, n, scheme, radius, topo_seed, csv);

    ExperimentConfig cfg = load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;

    if (run_cmd->parsed()) {
      const auto result = run_experiment(cfg);
      detail::print_sweep(out, result);
      out << "wrote " << cfg.output_dir << '\n';
      return 0;
    }
    if (sweep_cmd->parsed()) {
      if (!horizons_text.empty()) cfg.horizons = detail::parse_horizons(horizons_text);
      validate(cfg, ConfigMode::sweep);
      const auto result = run_experiment(cfg);
      detail::print_sweep(out, result);
      out << "wrote " << cfg.output_dir << '\n';
      return 0;
    }
    if (check_cmd->parsed()) {
      bool all = true;
      for (const auto& line : check_instance(cfg)) {
        out << (line.passed ? "PASS " : "FAIL ") << line.name << ": " << line.detail << '\n';
        all = all && line.passed;
      }
      return all ? 0 : 2;
    }
    if (compare_cmd->parsed()) {
      const auto cmp = compare_algorithms(cfg);
      const auto* a = cmp.dopbc.slope("ccv_1");
      const auto* b = cmp.baseline.slope("ccv_1");
      detail::print_slope(out, "dopbc", {"ccv_1", *a});
      detail::print_slope(out, "baseline-dspd", {"ccv_1", *b});
      out << "verdict: " << (a->exponent <= b->exponent ? "dopbc ccv slope <= baseline" : "dopbc ccv slope > baseline")
          << '\n';
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace dopbc::cli
