#include <gtest/gtest.h>

#include <cstdlib>
#include <regex>

#include "dopbc/harness.hpp"
#include "support.hpp"

using namespace dopbc;
using namespace testing_support;

namespace {

std::string field_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<none>";
}

std::string replace_line(std::string text, const std::string& key, const std::string& line) {
  const std::regex re("(^|\\n)" + std::regex_replace(key, std::regex("\\."), "\\.") + " = [^\\n]*");
  return std::regex_replace(text, re, "$1" + line);
}

}  // namespace

TEST(Config, ParsesMinimal) {
  const auto cfg = parse_config_text(minimal_config_text());
  EXPECT_EQ(cfg.topology.spec.kind, TopologyKind::complete);
  EXPECT_EQ(cfg.topology.n, 2);
  EXPECT_FALSE(cfg.algo.lambda_max.has_value());
  EXPECT_EQ(cfg.horizons, (std::vector<int>{64, 128, 256, 512}));
  EXPECT_EQ(cfg.comparator, ComparatorMethod::grid);
  EXPECT_FALSE(cfg.timing);
  // Documented defaults.
  EXPECT_EQ(cfg.algo.init, Initialization::Kind::common);
  EXPECT_EQ(cfg.grid_resolution, 0.01);
  EXPECT_EQ(cfg.output_dir, "out");
  EXPECT_EQ(cfg.topology.spec.seed, 0u);
}

TEST(Config, RoundTrips) {
  std::vector<ExperimentConfig> cfgs{parse_config_text(minimal_config_text()),
                                     parse_config_text(separable_config_text())};
  ExperimentConfig rg = cfgs[0];
  rg.topology.spec = {TopologyKind::random_geometric, 0.37, 12};
  rg.topology.n = 9;
  rg.comparator = ComparatorMethod::subgradient;
  rg.algo.lambda_max = 0.1 + 0.2;  // not exactly representable in short decimal
  rg.algo.init = Initialization::Kind::random;
  rg.problem.drift = 1.0 / 3.0;
  rg.output_dir = "results/run a";
  rg.seed = 18446744073709551615ull;
  cfgs.push_back(rg);
  for (const auto& c : cfgs) {
    const auto text = serialize_config(c);
    EXPECT_EQ(parse_config_text(text), c) << text;
    EXPECT_EQ(serialize_config(parse_config_text(text)), text);
  }
}

TEST(Config, CommentsAndBlankLines) {
  const auto cfg = parse_config_text("# header\n\n" + replace_line(minimal_config_text(), "topology.n",
                                                                   "topology.n = 3   # three agents"));
  EXPECT_EQ(cfg.topology.n, 3);
}

TEST(Config, ValidationNamesTheField) {
  const auto base = minimal_config_text();
  EXPECT_EQ(field_of(replace_line(base, "algo.c", "algo.c = 1.2")), "algo.c");
  EXPECT_EQ(field_of(replace_line(base, "algo.c", "algo.c = 0")), "algo.c");
  EXPECT_EQ(field_of(replace_line(base, "horizons", "horizons = 64, 64, 128, 256")), "horizons");
  EXPECT_EQ(field_of(replace_line(base, "horizons", "horizons = 64, x")), "horizons");
  EXPECT_EQ(field_of(replace_line(base, "topology.kind", "topology.kind = torus")), "topology.kind");
  EXPECT_EQ(field_of(replace_line(base, "topology.kind", "topology.kind = random-geometric")), "topology.radius");
  EXPECT_EQ(field_of(replace_line(base, "problem.d_i", "problem.d_i = two")), "problem.d_i");
  EXPECT_EQ(field_of(replace_line(base, "algo.lambda_max", "algo.lambda_max = -1")), "algo.lambda_max");
  EXPECT_EQ(field_of(replace_line(base, "seed", "# no seed")), "seed");
  EXPECT_EQ(field_of(base + "topology.n = 4\n"), "topology.n");
  EXPECT_EQ(field_of(base + "algo.momentum = 0.9\n"), "algo.momentum");
  EXPECT_EQ(field_of(base + "garbage line\n"), "line 16");
  EXPECT_EQ(field_of(replace_line(separable_config_text(), "problem.m", "problem.m = 2")), "problem.m");
  EXPECT_EQ(field_of(replace_line(base, "algo.kind", "algo.kind = baseline-dspd")), "algo.kind");
  EXPECT_EQ(field_of(replace_line(base, "topology.n", "topology.n = 5")), "comparator.method");
}

TEST(Config, SweepNeedsFourHorizons) {
  auto cfg = parse_config_text(minimal_config_text());
  cfg.horizons = {64, 128, 256};
  EXPECT_NO_THROW(validate(cfg, ConfigMode::run));
  try {
    validate(cfg, ConfigMode::sweep);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "horizons");
  }
}

TEST(Harness, RunWritesExpectedFiles) {
  TempDir dir;
  auto cfg = parse_config_text(minimal_config_text());
  cfg.output_dir = dir.path().string();
  const auto res = run_experiment(cfg);
  for (int T : {64, 128, 256, 512}) EXPECT_TRUE(std::filesystem::exists(dir / ("trace_T" + std::to_string(T) + ".csv")));
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "slopes.csv"));
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir.path()), std::filesystem::directory_iterator{}), 6);
  EXPECT_EQ(res.runs.size(), 4u);
  EXPECT_EQ(res.slopes.size(), 5u);
}

TEST(Harness, GoldenHeaders) {
  EXPECT_EQ(trace_header(1), "t,cost_inst,cum_regret_a,cum_regret_xbar,ccv_1,delta_x,lambda_bar_1,dual_clips");
  EXPECT_EQ(trace_header(2),
            "t,cost_inst,cum_regret_a,cum_regret_xbar,ccv_1,ccv_2,delta_x,lambda_bar_1,lambda_bar_2,dual_clips");
  EXPECT_EQ(summary_header(2),
            "T,alpha,sigma,regret_a,regret_xbar,ccv_1,ccv_2,ccv_xbar_1,ccv_xbar_2,delta_sum,runtime_ms");
  EXPECT_EQ(std::string(slopes_header()), "metric,exponent,intercept,r_squared,points,flag");

  TempDir dir;
  auto cfg = parse_config_text(minimal_config_text());
  cfg.output_dir = dir.path().string();
  run_experiment(cfg);
  EXPECT_EQ(first_line(read_file(dir / "trace_T64.csv")), trace_header(1));
  EXPECT_EQ(first_line(read_file(dir / "summary.csv")), summary_header(1));
  EXPECT_EQ(first_line(read_file(dir / "slopes.csv")), slopes_header());
}

TEST(Harness, TraceAgreesWithSummary) {
  TempDir dir;
  auto cfg = parse_config_text(minimal_config_text());
  cfg.output_dir = dir.path().string();
  const auto res = run_experiment(cfg);
  std::istringstream trace(read_file(dir / "trace_T128.csv"));
  std::string line, last;
  int rows = -1;
  while (std::getline(trace, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 128);
  std::vector<std::string> cols;
  std::stringstream ss(last);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  ASSERT_EQ(cols.size(), 8u);
  EXPECT_EQ(cols[0], "128");
  EXPECT_EQ(cols[2], format_real(res.runs[1].regret_a));
  EXPECT_EQ(cols[3], format_real(res.runs[1].regret_xbar));
  EXPECT_EQ(cols[4], format_real(res.runs[1].ccv_a[0]));
  const auto summary = read_file(dir / "summary.csv");
  EXPECT_NE(summary.find("\n128," + format_real(std::pow(128.0, -0.5)) + ","), std::string::npos);
  EXPECT_NE(summary.find(",0\n"), std::string::npos);  // timing disabled
}

TEST(Harness, ByteIdenticalAcrossRunsAndWorkerCounts) {
  TempDir a, b;
  auto cfg = parse_config_text(minimal_config_text());
  cfg.output_dir = a.path().string();
  ::setenv("DOPBC_WORKERS", "1", 1);
  run_experiment(cfg);
  cfg.output_dir = b.path().string();
  ::setenv("DOPBC_WORKERS", "4", 1);
  run_experiment(cfg);
  ::unsetenv("DOPBC_WORKERS");
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    const auto name = entry.path().filename().string();
    EXPECT_EQ(read_file(entry.path()), read_file(b / name)) << name;
  }
}

TEST(Harness, HorizonSeedsDiffer) {
  auto cfg = parse_config_text(minimal_config_text());
  cfg.algo.init = Initialization::Kind::random;
  const auto r1 = run_horizon(cfg, 64, nullptr, true);
  const auto r2 = run_horizon(cfg, 64, nullptr, true);
  EXPECT_EQ(r1.trace->actions, r2.trace->actions);
  EXPECT_GT(r1.trace->delta.front(), 0.0);
  EXPECT_NE(mix_seed(cfg.seed, 64), mix_seed(cfg.seed, 128));
}

TEST(Harness, WorkerCountFromEnvironment) {
  ::setenv("DOPBC_WORKERS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  ::setenv("DOPBC_WORKERS", "junk", 1);
  EXPECT_GE(worker_count(), 1u);
  ::unsetenv("DOPBC_WORKERS");
}

TEST(Harness, CheckInstancePasses) {
  const auto cfg = parse_config_text(minimal_config_text());
  for (const auto& line : check_instance(cfg)) EXPECT_TRUE(line.passed) << line.name << ": " << line.detail;
  const auto sep = parse_config_text(separable_config_text());
  const auto lines = check_instance(sep);
  EXPECT_TRUE(std::any_of(lines.begin(), lines.end(), [](const CheckLine& l) { return l.name == "separable decomposition"; }));
  for (const auto& line : lines) EXPECT_TRUE(line.passed) << line.name << ": " << line.detail;
}

TEST(Harness, CompareRequiresSeparable) {
  EXPECT_THROW(compare_algorithms(parse_config_text(minimal_config_text())), ValidationError);
}

TEST(Harness, CompareRunsBothAlgorithms) {
  const auto cmp = compare_algorithms(parse_config_text(separable_config_text()));
  ASSERT_NE(cmp.dopbc.slope("ccv_1"), nullptr);
  ASSERT_NE(cmp.baseline.slope("ccv_1"), nullptr);
  EXPECT_EQ(cmp.dopbc.runs.size(), 5u);
  EXPECT_EQ(cmp.baseline.runs.size(), 5u);
  EXPECT_LE(cmp.dopbc.slope("ccv_1")->exponent, cmp.baseline.slope("ccv_1")->exponent);
}
