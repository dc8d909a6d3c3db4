#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dopbc/baseline.hpp"
#include "dopbc/dopbc.hpp"
#include "dopbc/errors.hpp"
#include "dopbc/metrics.hpp"
#include "dopbc/netgraph.hpp"
#include "dopbc/problems.hpp"

namespace dopbc {

enum class ProblemKind { coupled_quadratic, separable_quadratic };
enum class AlgorithmKind { dopbc, baseline_dspd };

inline std::string_view to_string(ProblemKind k) {
  return k == ProblemKind::coupled_quadratic ? "coupled-quadratic" : "separable-quadratic";
}
inline std::string_view to_string(AlgorithmKind k) {
  return k == AlgorithmKind::dopbc ? "dopbc" : "baseline-dspd";
}
inline std::string_view to_string(Initialization::Kind k) {
  return k == Initialization::Kind::common ? "common" : "random";
}

struct ExperimentConfig {
  struct Topology {
    TopologySpec spec;
    int n = 0;
    bool operator==(const Topology&) const = default;
  };
  struct Problem {
    ProblemKind kind = ProblemKind::coupled_quadratic;
    int d_i = 1;
    int m = 1;
    double drift = 0.0;
    std::uint64_t seed = 0;
    bool operator==(const Problem&) const = default;
  };
  struct Algo {
    AlgorithmKind kind = AlgorithmKind::dopbc;
    double c = 0.5;
    std::optional<double> lambda_max;  // nullopt: sized from the Slater bound
    Initialization::Kind init = Initialization::Kind::common;
    bool operator==(const Algo&) const = default;
  };

  Topology topology;
  MixingScheme mixing = MixingScheme::lazy_metropolis;
  Problem problem;
  Algo algo;
  std::vector<int> horizons;
  ComparatorMethod comparator = ComparatorMethod::subgradient;
  double grid_resolution = 1e-2;
  std::string output_dir = "out";
  bool timing = true;
  std::uint64_t seed = 0;

  bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Config text format: one `key = value` per line, `#` starts a comment,
// blank lines ignored. See docs/config.md for the key list.
// ---------------------------------------------------------------------------
namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ValidationError(key, "expected an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ValidationError(key, "expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ValidationError(key, "expected true or false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValidationError(key, "empty list entry");
    out.push_back(parse_int<int>(key, item));
  }
  if (out.empty()) throw ValidationError(key, "list is empty");
  return out;
}

}  // namespace config_detail

enum class ConfigMode { run, sweep };

inline void validate(const ExperimentConfig& cfg, ConfigMode mode = ConfigMode::run) {
  if (cfg.topology.n < 1) throw ValidationError("topology.n", "must be at least 1");
  if (cfg.topology.spec.kind == TopologyKind::random_geometric &&
      (!(cfg.topology.spec.radius > 0.0) || cfg.topology.spec.radius > std::sqrt(2.0)))
    throw ValidationError("topology.radius", "must lie in (0, sqrt(2)]");
  if (cfg.problem.d_i < 1) throw ValidationError("problem.d_i", "must be at least 1");
  if (cfg.problem.m < 1) throw ValidationError("problem.m", "must be at least 1");
  if (cfg.problem.kind == ProblemKind::separable_quadratic && cfg.problem.m != 1)
    throw ValidationError("problem.m", "separable-quadratic has exactly one constraint");
  if (!(cfg.problem.drift >= 0.0)) throw ValidationError("problem.drift", "must be nonnegative");
  if (!(cfg.algo.c > 0.0 && cfg.algo.c < 1.0)) throw ValidationError("algo.c", "must lie in (0, 1)");
  if (cfg.algo.lambda_max && !(*cfg.algo.lambda_max > 0.0))
    throw ValidationError("algo.lambda_max", "must be positive or 'auto'");
  if (cfg.algo.kind == AlgorithmKind::baseline_dspd && cfg.problem.kind != ProblemKind::separable_quadratic)
    throw ValidationError("algo.kind", "baseline-dspd needs problem.kind = separable-quadratic");
  if (cfg.horizons.empty()) throw ValidationError("horizons", "at least one horizon required");
  for (std::size_t i = 0; i < cfg.horizons.size(); ++i) {
    if (cfg.horizons[i] < 1) throw ValidationError("horizons", "entries must be positive");
    if (i > 0 && cfg.horizons[i] <= cfg.horizons[i - 1])
      throw ValidationError("horizons", "must be strictly increasing");
  }
  if (mode == ConfigMode::sweep && cfg.horizons.size() < 4)
    throw ValidationError("horizons", "a sweep needs at least 4 horizons");
  if (!(cfg.grid_resolution > 0.0)) throw ValidationError("comparator.grid_resolution", "must be positive");
  if (cfg.comparator == ComparatorMethod::grid && cfg.topology.n * cfg.problem.d_i > 4)
    throw ValidationError("comparator.method", "grid search needs a joint dimension of at most 4");
}

inline ExperimentConfig parse_config(std::istream& in) {
  using namespace config_detail;
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("line " + std::to_string(lineno), "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ValidationError("line " + std::to_string(lineno), "missing key");
    if (!kv.emplace(key, value).second) throw ValidationError(key, "duplicate key");
  }

  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto need = [&](const std::string& key) {
    auto v = take(key);
    if (!v) throw ValidationError(key, "required key missing");
    if (v->empty()) throw ValidationError(key, "value is empty");
    return *v;
  };

  ExperimentConfig cfg;
  {
    const auto kind = need("topology.kind");
    auto k = parse_topology(kind);
    if (!k) throw ValidationError("topology.kind", "unknown topology '" + kind + "'");
    cfg.topology.spec.kind = *k;
  }
  cfg.topology.n = parse_int<int>("topology.n", need("topology.n"));
  if (cfg.topology.spec.kind == TopologyKind::random_geometric)
    cfg.topology.spec.radius = parse_real("topology.radius", need("topology.radius"));
  else if (auto r = take("topology.radius"))
    cfg.topology.spec.radius = parse_real("topology.radius", *r);
  if (auto s = take("topology.seed")) cfg.topology.spec.seed = parse_int<std::uint64_t>("topology.seed", *s);
  {
    const auto scheme = need("mixing.scheme");
    auto s = parse_mixing(scheme);
    if (!s) throw ValidationError("mixing.scheme", "unknown scheme '" + scheme + "'");
    cfg.mixing = *s;
  }
  {
    const auto kind = need("problem.kind");
    if (kind == "coupled-quadratic") cfg.problem.kind = ProblemKind::coupled_quadratic;
    else if (kind == "separable-quadratic") cfg.problem.kind = ProblemKind::separable_quadratic;
    else throw ValidationError("problem.kind", "unknown problem '" + kind + "'");
  }
  cfg.problem.d_i = parse_int<int>("problem.d_i", need("problem.d_i"));
  cfg.problem.m = parse_int<int>("problem.m", need("problem.m"));
  cfg.problem.drift = parse_real("problem.drift", need("problem.drift"));
  cfg.problem.seed = parse_int<std::uint64_t>("problem.seed", need("problem.seed"));
  {
    const auto kind = need("algo.kind");
    if (kind == "dopbc") cfg.algo.kind = AlgorithmKind::dopbc;
    else if (kind == "baseline-dspd") cfg.algo.kind = AlgorithmKind::baseline_dspd;
    else throw ValidationError("algo.kind", "unknown algorithm '" + kind + "'");
  }
  cfg.algo.c = parse_real("algo.c", need("algo.c"));
  {
    const auto lm = need("algo.lambda_max");
    if (lm != "auto") cfg.algo.lambda_max = parse_real("algo.lambda_max", lm);
  }
  if (auto init = take("algo.init")) {
    if (*init == "common") cfg.algo.init = Initialization::Kind::common;
    else if (*init == "random") cfg.algo.init = Initialization::Kind::random;
    else throw ValidationError("algo.init", "expected common or random");
  }
  cfg.horizons = parse_int_list("horizons", need("horizons"));
  {
    const auto method = need("comparator.method");
    auto m = parse_comparator(method);
    if (!m) throw ValidationError("comparator.method", "unknown method '" + method + "'");
    cfg.comparator = *m;
  }
  if (auto r = take("comparator.grid_resolution"))
    cfg.grid_resolution = parse_real("comparator.grid_resolution", *r);
  if (auto d = take("output.dir")) cfg.output_dir = *d;
  if (auto t = take("output.timing")) cfg.timing = parse_bool("output.timing", *t);
  cfg.seed = parse_int<std::uint64_t>("seed", need("seed"));

  if (!kv.empty()) throw ValidationError(kv.begin()->first, "unknown key");
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot open " + path.string());
  return parse_config(in);
}

// Canonical text form; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "topology.kind = " << to_string(cfg.topology.spec.kind) << '\n'
     << "topology.n = " << cfg.topology.n << '\n'
     << "topology.radius = " << format_real(cfg.topology.spec.radius) << '\n'
     << "topology.seed = " << cfg.topology.spec.seed << '\n'
     << "mixing.scheme = " << to_string(cfg.mixing) << '\n'
     << "problem.kind = " << to_string(cfg.problem.kind) << '\n'
     << "problem.d_i = " << cfg.problem.d_i << '\n'
     << "problem.m = " << cfg.problem.m << '\n'
     << "problem.drift = " << format_real(cfg.problem.drift) << '\n'
     << "problem.seed = " << cfg.problem.seed << '\n'
     << "algo.kind = " << to_string(cfg.algo.kind) << '\n'
     << "algo.c = " << format_real(cfg.algo.c) << '\n'
     << "algo.lambda_max = " << (cfg.algo.lambda_max ? format_real(*cfg.algo.lambda_max) : "auto") << '\n'
     << "algo.init = " << to_string(cfg.algo.init) << '\n'
     << "horizons = ";
  for (std::size_t i = 0; i < cfg.horizons.size(); ++i) os << (i ? ", " : "") << cfg.horizons[i];
  os << '\n'
     << "comparator.method = " << to_string(cfg.comparator) << '\n'
     << "comparator.grid_resolution = " << format_real(cfg.grid_resolution) << '\n'
     << "output.dir = " << cfg.output_dir << '\n'
     << "output.timing = " << (cfg.timing ? "true" : "false") << '\n'
     << "seed = " << cfg.seed << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Execution.
// ---------------------------------------------------------------------------
inline std::shared_ptr<ProblemSequence> make_problem(const ExperimentConfig& cfg, int horizon) {
  const auto& pr = cfg.problem;
  if (pr.kind == ProblemKind::coupled_quadratic)
    return make_coupled_quadratic(cfg.topology.n, pr.d_i, pr.m, horizon, pr.seed, pr.drift);
  return make_separable_quadratic(cfg.topology.n, pr.d_i, horizon, pr.seed, pr.drift);
}

struct HorizonResult {
  int horizon = 0;
  double alpha = 0.0;
  double sigma = 0.0;
  double lambda_max = 0.0;
  double regret_a = 0.0;
  double regret_xbar = 0.0;
  std::vector<double> ccv_a;
  std::vector<double> ccv_xbar;
  ConsensusSum delta;
  InequalityCheck consensus_recursion;
  InequalityCheck dual_telescoping;
  double unclipped_fraction = 1.0;
  Comparator comparator;
  double runtime_ms = 0.0;
  std::shared_ptr<const RunTrace> trace;  // kept only on request
};

// Trace CSV header: t, cost_inst, cum_regret_a, cum_regret_xbar, ccv_1..ccv_m,
// delta_x, lambda_bar_1..lambda_bar_m, dual_clips.
inline std::string trace_header(int m) {
  std::string h = "t,cost_inst,cum_regret_a,cum_regret_xbar";
  for (int k = 1; k <= m; ++k) h += ",ccv_" + std::to_string(k);
  h += ",delta_x";
  for (int k = 1; k <= m; ++k) h += ",lambda_bar_" + std::to_string(k);
  h += ",dual_clips";
  return h;
}

inline std::string summary_header(int m) {
  std::string h = "T,alpha,sigma,regret_a,regret_xbar";
  for (int k = 1; k <= m; ++k) h += ",ccv_" + std::to_string(k);
  for (int k = 1; k <= m; ++k) h += ",ccv_xbar_" + std::to_string(k);
  h += ",delta_sum,runtime_ms";
  return h;
}

inline const char* slopes_header() { return "metric,exponent,intercept,r_squared,points,flag"; }

inline void write_trace_csv(std::ostream& os, const RunTrace& tr, const std::vector<double>& regret_a,
                            const std::vector<double>& regret_xbar) {
  const int m = tr.info.num_constraints;
  os << trace_header(m) << '\n';
  std::vector<double> ccv(m, 0.0);
  for (int t = 0; t < tr.length(); ++t) {
    os << (t + 1) << ',' << format_real(tr.cost_a[t]) << ',' << format_real(regret_a[t]) << ','
       << format_real(regret_xbar[t]);
    for (int k = 0; k < m; ++k) {
      ccv[k] += std::max(0.0, tr.g_a(k, t));
      os << ',' << format_real(ccv[k]);
    }
    os << ',' << format_real(tr.delta[t]);
    for (int k = 0; k < m; ++k) os << ',' << format_real(tr.lambda_bar(k, t));
    os << ',' << tr.dual_clips[t] << '\n';
  }
}

// One fresh run at horizon T with alpha = T^{-c}.
inline HorizonResult run_horizon(const ExperimentConfig& cfg, int horizon, std::ostream* trace_out = nullptr,
                                 bool keep_trace = false) {
  const auto start = std::chrono::steady_clock::now();
  const Graph graph = build_graph(cfg.topology.spec, cfg.topology.n);
  const MixingMatrix mix = build_mixing(graph, cfg.mixing);
  const auto problem = make_problem(cfg, horizon);
  const double lambda_max = cfg.algo.lambda_max.value_or(slater_dual_bound(*problem));
  const AlgoParams params = AlgoParams::for_horizon(horizon, cfg.algo.c, lambda_max);
  const Initialization init{cfg.algo.init, mix_seed(cfg.seed, static_cast<std::uint64_t>(horizon))};

  auto trace = std::make_shared<RunTrace>(cfg.algo.kind == AlgorithmKind::dopbc
                                              ? run(*problem, mix, params, init)
                                              : run_baseline(*problem, mix, params));
  ComparatorOptions copt;
  copt.grid_resolution = cfg.grid_resolution;
  const Comparator comp = hindsight_comparator(*problem, cfg.comparator, copt);

  HorizonResult r;
  r.horizon = horizon;
  r.alpha = params.alpha;
  r.sigma = mix.sigma();
  r.lambda_max = lambda_max;
  const auto reg_a = cumulative_regret(*trace, comp, *problem, Sequence::action);
  const auto reg_x = cumulative_regret(*trace, comp, *problem, Sequence::belief_average);
  r.regret_a = reg_a.back();
  r.regret_xbar = reg_x.back();
  for (int k = 0; k < problem->num_constraints(); ++k) {
    r.ccv_a.push_back(ccv(*trace, k, Sequence::action));
    r.ccv_xbar.push_back(ccv(*trace, k, Sequence::belief_average));
  }
  r.delta = consensus_error_sum(*trace);
  r.consensus_recursion = check_consensus_recursion(*trace);
  r.dual_telescoping = check_dual_telescoping(*trace);
  r.unclipped_fraction = unclipped_fraction(*trace);
  r.comparator = comp;
  if (trace_out) write_trace_csv(*trace_out, *trace, reg_a, reg_x);
  if (keep_trace) r.trace = trace;
  r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

struct SlopeRow {
  std::string metric;
  SlopeFit fit;
};

struct SweepResult {
  std::vector<HorizonResult> runs;
  std::vector<SlopeRow> slopes;  // empty with fewer than 4 horizons

  const SlopeFit* slope(std::string_view metric) const {
    for (const auto& s : slopes)
      if (s.metric == metric) return &s.fit;
    return nullptr;
  }
};

inline std::vector<SlopeRow> fit_slopes(const std::vector<HorizonResult>& runs) {
  std::vector<SlopeRow> rows;
  if (runs.size() < 4) return rows;
  auto fit = [&](const std::string& name, auto get) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : runs) pts.emplace_back(r.horizon, get(r));
    rows.push_back({name, fit_growth_exponent(pts)});
  };
  fit("regret_a", [](const HorizonResult& r) { return r.regret_a; });
  fit("regret_xbar", [](const HorizonResult& r) { return r.regret_xbar; });
  const int m = static_cast<int>(runs.front().ccv_a.size());
  for (int k = 0; k < m; ++k)
    fit("ccv_" + std::to_string(k + 1), [k](const HorizonResult& r) { return r.ccv_a[k]; });
  for (int k = 0; k < m; ++k)
    fit("ccv_xbar_" + std::to_string(k + 1), [k](const HorizonResult& r) { return r.ccv_xbar[k]; });
  fit("delta_sum", [](const HorizonResult& r) { return r.delta.sum; });
  return rows;
}

// Worker count from DOPBC_WORKERS, else the available parallelism.
inline unsigned worker_count() {
  if (const char* env = std::getenv("DOPBC_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct SweepOptions {
  std::optional<std::filesystem::path> output_dir;  // write CSVs when set
  bool keep_traces = false;
};

// Every horizon is an independent job; each writes only its own trace file
// and the summary is assembled after all jobs finish.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& opt = {}) {
  validate(cfg);
  if (opt.output_dir) std::filesystem::create_directories(*opt.output_dir);
  const std::size_t jobs = cfg.horizons.size();
  std::vector<HorizonResult> results(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs;) {
      try {
        const int T = cfg.horizons[j];
        if (opt.output_dir) {
          const auto path = *opt.output_dir / ("trace_T" + std::to_string(T) + ".csv");
          std::ofstream out(path, std::ios::binary);
          if (!out) throw Error("cannot write " + path.string());
          results[j] = run_horizon(cfg, T, &out, opt.keep_traces);
        } else {
          results[j] = run_horizon(cfg, T, nullptr, opt.keep_traces);
        }
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const unsigned n_workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(jobs));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  SweepResult sweep;
  sweep.runs = std::move(results);
  sweep.slopes = fit_slopes(sweep.runs);

  if (opt.output_dir) {
    const int m = static_cast<int>(sweep.runs.front().ccv_a.size());
    std::ofstream summary(*opt.output_dir / "summary.csv", std::ios::binary);
    summary << summary_header(m) << '\n';
    for (const auto& r : sweep.runs) {
      summary << r.horizon << ',' << format_real(r.alpha) << ',' << format_real(r.sigma) << ','
              << format_real(r.regret_a) << ',' << format_real(r.regret_xbar);
      for (double v : r.ccv_a) summary << ',' << format_real(v);
      for (double v : r.ccv_xbar) summary << ',' << format_real(v);
      summary << ',' << format_real(r.delta.sum) << ',' << (cfg.timing ? format_real(r.runtime_ms) : "0") << '\n';
    }
    std::ofstream slopes(*opt.output_dir / "slopes.csv", std::ios::binary);
    slopes << slopes_header() << '\n';
    for (const auto& s : sweep.slopes)
      slopes << s.metric << ',' << format_real(s.fit.exponent) << ',' << format_real(s.fit.intercept) << ','
             << format_real(s.fit.r_squared) << ',' << sweep.runs.size() << ',' << s.fit.flag << '\n';
    if (!summary || !slopes) throw Error("failed writing sweep outputs");
  }
  return sweep;
}

inline SweepResult run_experiment(const ExperimentConfig& cfg) {
  return run_sweep(cfg, SweepOptions{std::filesystem::path(cfg.output_dir)});
}

// DOPBC and the decision-sharing baseline on the same separable instance.
struct Comparison {
  SweepResult dopbc;
  SweepResult baseline;
};

inline Comparison compare_algorithms(const ExperimentConfig& cfg) {
  if (cfg.problem.kind != ProblemKind::separable_quadratic)
    throw ValidationError("problem.kind", "compare needs separable-quadratic");
  validate(cfg, ConfigMode::sweep);
  ExperimentConfig a = cfg;
  a.algo.kind = AlgorithmKind::dopbc;
  ExperimentConfig b = cfg;
  b.algo.kind = AlgorithmKind::baseline_dspd;
  return {run_sweep(a), run_sweep(b)};
}

// ---------------------------------------------------------------------------
// Instance and invariant audit used by the `check` subcommand.
// ---------------------------------------------------------------------------
struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Steps DOPBC round by round and checks the per-round state invariants.
inline std::vector<CheckLine> audit_rounds(const ProblemSequence& p, const MixingMatrix& mix,
                                           const AlgoParams& params, const Initialization& init) {
  auto states = initial_states(p, init);
  const auto& set = p.product_set();
  int bad_state = 0, bad_action = 0, bad_average = 0;
  for (int t = 1; t <= p.horizon(); ++t) {
    auto out = run_round(p, t, states, mix, params);
    Vector xb = Vector::Zero(set.dim()), lb = Vector::Zero(p.num_constraints());
    for (std::size_t i = 0; i < out.beliefs_hat.size(); ++i) {
      xb += out.beliefs_hat[i];
      lb += out.duals_hat[i];
    }
    xb /= static_cast<double>(out.beliefs_hat.size());
    lb /= static_cast<double>(out.duals_hat.size());
    if ((xb - out.diagnostics.belief_average).cwiseAbs().maxCoeff() > 1e-10 ||
        (lb - out.diagnostics.dual_average).cwiseAbs().maxCoeff() > 1e-10)
      ++bad_average;
    for (int i = 0; i < p.num_agents(); ++i) {
      const Vector blk = project_block(set, i, out.beliefs_hat[i]);
      if (blk != out.executed_action.segment(set.offset(i), set.block_dim(i))) ++bad_action;
    }
    for (const auto& s : out.next) {
      if (!set.contains(s.belief, 1e-12) || (s.dual.array() < 0.0).any() ||
          (s.dual.array() > params.lambda_max).any())
        ++bad_state;
    }
    states = std::move(out.next);
  }
  const std::string rounds = std::to_string(p.horizon()) + " rounds";
  return {{"state feasibility", bad_state == 0, rounds + ", " + std::to_string(bad_state) + " infeasible states"},
          {"executed-action consistency", bad_action == 0, rounds + ", " + std::to_string(bad_action) + " mismatches"},
          {"average preservation", bad_average == 0, rounds + ", " + std::to_string(bad_average) + " drifts"}};
}

inline std::vector<CheckLine> check_instance(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<CheckLine> lines;
  const int T = cfg.horizons.front();
  const Graph graph = build_graph(cfg.topology.spec, cfg.topology.n);
  const MixingMatrix mix = build_mixing(graph, cfg.mixing);
  const auto mr = inspect_mixing(mix, graph);
  lines.push_back({"mixing matrix", mr.ok(graph.is_connected()),
                   "sigma=" + format_real(mr.sigma) + " row_dev=" + format_real(mr.max_row_deviation) +
                       " min_eig=" + format_real(mr.min_eigenvalue)});

  const auto p = make_problem(cfg, T);
  const auto grads = validate_gradients(*p, 100, 1e-6, cfg.seed);
  lines.push_back({"gradients vs central differences", grads.passed(), "max rel err " + format_real(grads.max_error())});
  const auto convex = probe_convexity(*p, 200, cfg.seed);
  lines.push_back({"convexity probe", convex.passed(),
                   "max gap " + format_real(std::max(convex.max_cost_gap, convex.max_constraint_gap))});
  const auto audit = audit_bounds(*p, 1000, cfg.seed);
  lines.push_back({"declared bounds", audit.passed(),
                   "max ratio " + format_real(std::max({audit.max_grad_f_ratio, audit.max_jac_g_ratio,
                                                        audit.max_lipschitz_ratio}))});
  {
    const auto q = make_problem(cfg, T);
    std::mt19937_64 rng(cfg.seed);
    bool same = true;
    for (int s = 0; s < 20 && same; ++s) {
      const Vector x = sample_point(p->product_set(), rng);
      const int t = 1 + s % T;
      same = p->cost(t, x) == q->cost(t, x) && p->cost_grad(t, x) == q->cost_grad(t, x) &&
             p->constraint(t, x) == q->constraint(t, x) && p->constraint_jac(t, x) == q->constraint_jac(t, x);
    }
    lines.push_back({"oracle determinism", same, "20 points, bitwise"});
  }
  if (const auto* sep = p->separable()) {
    std::mt19937_64 rng(cfg.seed + 1);
    double worst = 0.0;
    const auto& set = p->product_set();
    for (int s = 0; s < 100; ++s) {
      const Vector x = sample_point(set, rng);
      const int t = 1 + s % T;
      double f = 0.0;
      Vector g = Vector::Zero(p->num_constraints());
      for (int i = 0; i < p->num_agents(); ++i) {
        const Vector xi = x.segment(set.offset(i), set.block_dim(i));
        f += sep->local_cost(t, i, xi);
        g += sep->local_constraint(t, i, xi);
      }
      worst = std::max({worst, std::abs(f - p->cost(t, x)), (g - p->constraint(t, x)).cwiseAbs().maxCoeff()});
    }
    lines.push_back({"separable decomposition", worst <= 1e-12, "max abs diff " + format_real(worst)});
  }

  const double lambda_max = cfg.algo.lambda_max.value_or(slater_dual_bound(*p));
  const auto params = AlgoParams::for_horizon(T, cfg.algo.c, lambda_max);
  const Initialization init{cfg.algo.init, mix_seed(cfg.seed, static_cast<std::uint64_t>(T))};
  for (auto& l : audit_rounds(*p, mix, params, init)) lines.push_back(std::move(l));
  const RunTrace tr = run(*p, mix, params, init);
  const auto rec = check_consensus_recursion(tr);
  lines.push_back({"consensus-error recursion", rec.passed(), std::to_string(rec.violations) + " violations"});
  const auto tel = check_dual_telescoping(tr);
  lines.push_back({"dual telescoping", tel.passed(),
                   std::to_string(tel.checked) + " unclipped rounds, " + std::to_string(tel.violations) + " violations"});
  const auto cs = consensus_error_sum(tr);
  const bool common = cfg.algo.init == Initialization::Kind::common;
  lines.push_back({"consensus-error ceiling", !common || cs.sum <= cs.ceiling,
                   "sum " + format_real(cs.sum) + " ceiling " + format_real(cs.ceiling) +
                       (common ? "" : " (not enforced for random init)")});
  return lines;
}

}  // namespace dopbc
