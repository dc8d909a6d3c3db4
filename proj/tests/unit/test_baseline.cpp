#include <gtest/gtest.h>

#include "dopbc/baseline.hpp"

using namespace dopbc;

TEST(Baseline, MatchesReferenceLoop) {
  const int n = 3, di = 2, T = 80;
  const auto p = make_separable_quadratic(n, di, T, 13);
  const auto mix = build_mixing(build_graph(TopologyKind::path, n), MixingScheme::lazy_metropolis);
  const auto params = AlgoParams::for_horizon(T, 0.5, 2.0);
  const RunTrace tr = run_baseline(*p, mix, params);

  const Matrix& w = mix.weights();
  const double rho = p->data().rho;
  const double a = params.alpha;
  std::vector<Vector> x(n, Vector::Zero(di));
  std::vector<double> lam(n, 0.0);
  for (int t = 1; t <= T; ++t) {
    const Vector b = p->target(t);
    double lam_bar = 0.0;
    for (int i = 0; i < n; ++i) {
      EXPECT_LE((tr.actions.col(t - 1).segment(di * i, di) - x[i]).cwiseAbs().maxCoeff(), 1e-12);
      lam_bar += lam[i] / n;
    }
    EXPECT_NEAR(tr.lambda_bar(0, t - 1), lam_bar, 1e-12);
    std::vector<Vector> nx(n);
    std::vector<double> nl(n);
    for (int i = 0; i < n; ++i) {
      double mixed = 0.0;
      for (int j = 0; j < n; ++j) mixed += w(i, j) * lam[j];
      const double gi = x[i].sum() - rho / n;
      const Vector d = 2.0 * (x[i] - b.segment(di * i, di)) + Vector::Constant(di, lam[i]);
      nx[i] = (x[i] - a * d).cwiseMax(-1.0).cwiseMin(1.0);
      nl[i] = std::clamp(mixed + a * n * gi, 0.0, 2.0);
    }
    x = nx;
    lam = nl;
  }
}

TEST(Baseline, TraceShape) {
  const auto p = make_separable_quadratic(4, 2, 64, 3);
  const auto tr = run_baseline(*p, build_graph(TopologyKind::ring, 4), AlgoParams::for_horizon(64, 0.5, 5.0));
  EXPECT_EQ(tr.length(), 64);
  EXPECT_FALSE(tr.info.has_belief_average);
  EXPECT_EQ(tr.info.algorithm, "baseline-dspd");
  EXPECT_EQ(tr.cost_a, tr.cost_xbar);
  EXPECT_EQ(tr.g_a, tr.g_xbar);
  EXPECT_GE(tr.lambda_bar.minCoeff(), 0.0);
  EXPECT_LE(tr.lambda_bar.maxCoeff(), 5.0);
  for (int t = 0; t < 64; ++t) EXPECT_TRUE(p->product_set().contains(tr.actions.col(t)));
}

TEST(Baseline, CouplingDiagnostic) {
  const auto p = make_separable_quadratic(8, 2, 512, 3);
  const auto params = AlgoParams::for_horizon(512, 0.5, 5.0);
  const auto tr = run_baseline(*p, build_graph(TopologyKind::ring, 8), params);
  const auto r = coupling_diagnostic(tr);
  EXPECT_NEAR(r.s_alpha, 512 * params.alpha, 1e-9);
  EXPECT_GE(r.s_violation, 0.0);
  double sum = 0.0;
  for (double d : tr.delta) sum += d;
  EXPECT_NEAR(r.disagreement_sum, sum, 1e-9);
  EXPECT_NEAR(r.ratio, sum / (r.s_alpha + r.s_violation), 1e-12);
  EXPECT_GE(r.trailing_ratio_cv, 0.0);
}

TEST(Baseline, Errors) {
  const auto coupled = make_coupled_quadratic(2, 1, 1, 10, 1, 0.5);
  EXPECT_THROW(run_baseline(*coupled, build_graph(TopologyKind::path, 2), AlgoParams::for_horizon(10, 0.5, 1.0)),
               CapabilityError);
  const auto p = make_separable_quadratic(2, 1, 10, 1);
  const auto dopbc_trace = run(*p, build_graph(TopologyKind::path, 2), AlgoParams::for_horizon(10, 0.5, 1.0));
  EXPECT_THROW(coupling_diagnostic(dopbc_trace), CapabilityError);
}
