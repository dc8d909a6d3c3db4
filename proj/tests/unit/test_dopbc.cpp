#include <gtest/gtest.h>

#include <random>

#include "dopbc/dopbc.hpp"

using namespace dopbc;

namespace {

// f(x) = (x1 + x2 - 1)^2, g(x) = x1 - x2 - 0.2 on [-1, 1]^2, one scalar block per agent.
std::shared_ptr<CustomProblem> two_agent_problem(int T) {
  CustomProblemSpec s;
  s.horizon = T;
  s.cost = [](int, const Vector& x) { return (x(0) + x(1) - 1.0) * (x(0) + x(1) - 1.0); };
  s.cost_grad = [](int, const Vector& x) { return Vector::Constant(2, 2.0 * (x(0) + x(1) - 1.0)); };
  s.constraint = [](int, const Vector& x) { return Vector::Constant(1, x(0) - x(1) - 0.2); };
  s.constraint_jac = [](int, const Vector&) {
    Matrix j(1, 2);
    j << 1.0, -1.0;
    return j;
  };
  s.bounds = {6.0 * std::sqrt(2.0), std::sqrt(2.0), std::sqrt(2.0), 0.0};
  return std::make_shared<CustomProblem>(
      ProductSet({ConvexSet::cube(1, -1.0, 1.0), ConvexSet::cube(1, -1.0, 1.0)}), s);
}

}  // namespace

TEST(Dopbc, StepSizeFromHorizon) {
  const auto p = AlgoParams::for_horizon(1024, 0.5, 3.0);
  EXPECT_DOUBLE_EQ(p.alpha, 1.0 / 32.0);
  EXPECT_DOUBLE_EQ(AlgoParams::for_horizon(4096, 0.75, 1.0).alpha, 1.0 / 512.0);
  EXPECT_THROW(AlgoParams::for_horizon(100, 1.0, 1.0), DomainError);
  EXPECT_THROW(AlgoParams::for_horizon(100, 0.5, 0.0), DomainError);
}

TEST(Dopbc, TwoAgentRoundByHand) {
  const auto p = two_agent_problem(5);
  std::vector<AgentState> states(2);
  states[0].belief = (Vector(2) << 0.4, -0.2).finished();
  states[0].dual = Vector::Constant(1, 0.3);
  states[1].belief = (Vector(2) << 0.0, 0.6).finished();
  states[1].dual = Vector::Constant(1, 0.1);
  Matrix w(2, 2);
  w << 0.75, 0.25, 0.25, 0.75;
  AlgoParams params;
  params.alpha = 0.1;
  params.lambda_max = 10.0;

  const auto out = run_round(*p, 1, states, w, params);
  EXPECT_NEAR(out.beliefs_hat[0](0), 0.3, 1e-15);
  EXPECT_NEAR(out.beliefs_hat[1](1), 0.4, 1e-15);
  EXPECT_NEAR(out.duals_hat[0](0), 0.25, 1e-15);
  EXPECT_NEAR(out.duals_hat[1](0), 0.15, 1e-15);
  EXPECT_NEAR(out.executed_action(0), 0.3, 1e-15);
  EXPECT_NEAR(out.executed_action(1), 0.4, 1e-15);
  // Agent 0 moves only block 0, agent 1 only block 1.
  EXPECT_NEAR(out.next[0].belief(0), 0.415, 1e-15);
  EXPECT_NEAR(out.next[0].belief(1), 0.0, 1e-15);
  EXPECT_NEAR(out.next[1].belief(0), 0.1, 1e-15);
  EXPECT_NEAR(out.next[1].belief(1), 0.515, 1e-15);
  EXPECT_NEAR(out.next[0].dual(0), 0.26, 1e-15);
  EXPECT_NEAR(out.next[1].dual(0), 0.10, 1e-15);
  EXPECT_NEAR(out.diagnostics.mean_constraint_hat(0), -0.2, 1e-15);
  EXPECT_EQ(out.diagnostics.dual_clip_count, 0);
}

// Single agent: DOPBC collapses to projected primal-dual on f and g.
TEST(Dopbc, SingleAgentMatchesReferenceLoop) {
  const auto p = make_coupled_quadratic(1, 3, 2, 100, 5, 0.5);
  const auto params = AlgoParams::for_horizon(100, 0.5, 4.0);
  const auto mix = build_mixing(build_graph(TopologyKind::complete, 1), MixingScheme::lazy_metropolis);
  const RunTrace tr = run(*p, mix, params);

  const auto& set = p->product_set();
  Vector x = set.project(Vector::Zero(3));
  Vector lam = Vector::Zero(2);
  const double a = params.alpha;
  for (int t = 1; t <= 100; ++t) {
    EXPECT_LE((tr.actions.col(t - 1) - x).cwiseAbs().maxCoeff(), 1e-12) << "t=" << t;
    EXPECT_LE((tr.lambda_bar.col(t - 1) - lam).cwiseAbs().maxCoeff(), 1e-12) << "t=" << t;
    EXPECT_NEAR(tr.cost_a[t - 1], p->cost(t, x), 1e-12);
    const Vector dir = p->cost_grad(t, x) + p->constraint_jac(t, x).transpose() * lam;
    const Vector g = p->constraint(t, x);
    x = set.project(x - a * dir);
    lam = (lam + a * g).cwiseMax(0.0).cwiseMin(4.0);
  }
  EXPECT_LE((tr.final_lambda_bar - lam).cwiseAbs().maxCoeff(), 1e-12);
  for (double d : tr.delta) EXPECT_EQ(d, 0.0);
}

TEST(Dopbc, ConsensusPreservesAverages) {
  const auto mix = build_mixing(build_graph(TopologySpec{TopologyKind::random_geometric, 0.4, 9}, 12),
                                MixingScheme::lazy_metropolis);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<AgentState> states(12);
  for (auto& s : states) {
    s.belief = Vector::NullaryExpr(5, [&] { return nd(rng); });
    s.dual = Vector::NullaryExpr(2, [&] { return std::abs(nd(rng)); });
  }
  const auto out = consensus_step(states, mix);
  std::vector<AgentState> mixed(12);
  for (int i = 0; i < 12; ++i) mixed[i] = {out.beliefs_hat[i], out.duals_hat[i]};
  EXPECT_LE((belief_average(mixed) - belief_average(states)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((dual_average(mixed) - dual_average(states)).cwiseAbs().maxCoeff(), 1e-13);
  // Contraction of the disagreement by at most sigma.
  EXPECT_LE(consensus_error(mixed), mix.sigma() * consensus_error(states) + 1e-12);
}

TEST(Dopbc, StatesStayFeasible) {
  const auto p = make_coupled_quadratic(6, 2, 2, 300, 4, 0.5);
  const auto mix = build_mixing(build_graph(TopologyKind::ring, 6), MixingScheme::lazy_metropolis);
  const auto params = AlgoParams::for_horizon(300, 0.5, 0.05);  // tight cap forces clipping
  auto states = initial_states(*p, {Initialization::Kind::random, 3});
  int clips = 0;
  for (int t = 1; t <= 300; ++t) {
    auto out = run_round(*p, t, states, mix, params);
    EXPECT_TRUE(p->product_set().contains(out.executed_action));
    for (const auto& s : out.next) {
      EXPECT_TRUE(p->product_set().contains(s.belief));
      EXPECT_GE(s.dual.minCoeff(), 0.0);
      EXPECT_LE(s.dual.maxCoeff(), 0.05);
    }
    clips += out.diagnostics.dual_clip_count;
    states = std::move(out.next);
  }
  EXPECT_GT(clips, 0);
}

TEST(Dopbc, CommonStartKeepsBeliefsFeasibleAndRunIsDeterministic) {
  const auto p = make_coupled_quadratic(4, 2, 1, 200, 8, 0.5);
  const auto g = build_graph(TopologyKind::path, 4);
  const auto params = AlgoParams::for_horizon(200, 0.5, 5.0);
  const auto a = run(*p, g, params);
  const auto b = run(*p, g, params);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.lambda_bar, b.lambda_bar);
  EXPECT_EQ(a.delta, b.delta);
  EXPECT_EQ(a.delta.front(), 0.0);
  EXPECT_EQ(a.info.algorithm, "dopbc");
  EXPECT_TRUE(a.info.has_belief_average);
}

TEST(Dopbc, RandomInitializationFollowsSeed) {
  const auto p = make_coupled_quadratic(3, 2, 1, 10, 1, 0.5);
  const auto s1 = initial_states(*p, {Initialization::Kind::random, 5});
  const auto s2 = initial_states(*p, {Initialization::Kind::random, 5});
  const auto s3 = initial_states(*p, {Initialization::Kind::random, 6});
  EXPECT_EQ(s1[1].belief, s2[1].belief);
  EXPECT_NE(s1[1].belief, s3[1].belief);
  EXPECT_NE(s1[0].belief, s1[1].belief);
}

TEST(Dopbc, ScheduleOverridesConstantStep) {
  AlgoParams p = AlgoParams::for_horizon(100, 0.5, 1.0);
  EXPECT_TRUE(p.constant_step());
  p.schedule = [](int t) { return 1.0 / t; };
  EXPECT_FALSE(p.constant_step());
  EXPECT_DOUBLE_EQ(p.step(4), 0.25);
}

TEST(Dopbc, Errors) {
  const auto p = two_agent_problem(3);
  const Vector x = Vector::Zero(2);
  EXPECT_THROW(pseudo_gradient(*p, 1, 0, x, Vector::Constant(1, -0.1)), DomainError);
  EXPECT_THROW(pseudo_gradient(*p, 1, 0, x, Vector::Zero(2)), ShapeError);
  EXPECT_THROW(pseudo_gradient(*p, 1, 2, x, Vector::Zero(1)), IndexError);
  EXPECT_THROW(primal_update(p->product_set(), 0, x, Vector::Zero(1), 0.0), DomainError);
  EXPECT_THROW(run(*p, Graph(2, {}), AlgoParams::for_horizon(3, 0.5, 1.0)), ConnectivityError);
  const auto mix3 = build_mixing(build_graph(TopologyKind::ring, 3), MixingScheme::lazy_metropolis);
  EXPECT_THROW(run(*p, mix3, AlgoParams::for_horizon(3, 0.5, 1.0)), ShapeError);
  const auto states = initial_states(*p, {});
  EXPECT_THROW(consensus_step(states, Matrix::Identity(3, 3)), ShapeError);
}
