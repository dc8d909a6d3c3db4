#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dopbc/errors.hpp"
#include "dopbc/geometry.hpp"
#include "dopbc/netgraph.hpp"
#include "dopbc/problems.hpp"
#include "dopbc/trace.hpp"

// Distributed online primal-dual with belief consensus. Each agent keeps a
// belief of the whole joint decision plus a dual estimate; a round mixes both
// over the graph, executes each agent's own block, then takes a block-wise
// projected primal step and a projected dual ascent step.
namespace dopbc {

struct AgentState {
  Vector belief;  // estimate of the joint decision, every block in X_j
  Vector dual;    // in [0, lambda_max]^m
};

struct AlgoParams {
  double c = 0.5;
  double alpha = 1.0;
  double lambda_max = 1.0;
  // Optional per-round step override. Runs using it are outside the
  // constant-step regime the rate guarantees cover.
  std::function<double(int)> schedule;

  static AlgoParams for_horizon(int horizon, double c, double lambda_max) {
    AlgoParams p;
    p.c = c;
    p.alpha = std::pow(static_cast<double>(horizon), -c);
    p.lambda_max = lambda_max;
    p.validate();
    return p;
  }

  double step(int t) const { return schedule ? schedule(t) : alpha; }
  bool constant_step() const { return !schedule; }

  void validate() const {
    if (!(c > 0.0 && c < 1.0)) throw DomainError("trade-off exponent c must lie in (0, 1)");
    if (!(alpha > 0.0)) throw DomainError("step size must be positive");
    if (!(lambda_max > 0.0)) throw DomainError("lambda_max must be positive");
  }
};

struct ConsensusResult {
  std::vector<Vector> beliefs_hat;
  std::vector<Vector> duals_hat;
};

// xhat_i = sum_j W_ij x_j and lambdahat_i = sum_j W_ij lambda_j.
inline ConsensusResult consensus_step(std::span<const AgentState> states, const Matrix& w) {
  const auto n = static_cast<Eigen::Index>(states.size());
  if (n == 0 || w.rows() != n || w.cols() != n)
    throw ShapeError("mixing matrix is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                     " for " + std::to_string(n) + " agents");
  const auto d = states[0].belief.size();
  const auto m = states[0].dual.size();
  for (const auto& s : states)
    if (s.belief.size() != d || s.dual.size() != m) throw ShapeError("agent states disagree in dimension");

  ConsensusResult out;
  out.beliefs_hat.assign(n, Vector::Zero(d));
  out.duals_hat.assign(n, Vector::Zero(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double wij = w(i, j);
      if (wij == 0.0) continue;
      out.beliefs_hat[i].noalias() += wij * states[j].belief;
      out.duals_hat[i].noalias() += wij * states[j].dual;
    }
  }
  return out;
}

inline ConsensusResult consensus_step(std::span<const AgentState> states, const MixingMatrix& w) {
  return consensus_step(states, w.weights());
}

// Block i of grad f_t(xhat) + sum_k lambdahat_k grad g_{k,t}(xhat).
inline Vector pseudo_gradient(const ProblemSequence& p, int t, int agent, const Vector& x_hat,
                              const Vector& lambda_hat) {
  if (lambda_hat.size() != p.num_constraints()) throw ShapeError("dual has wrong dimension");
  if ((lambda_hat.array() < 0.0).any()) throw DomainError("dual estimate has a negative entry");
  p.product_set().check_joint(x_hat);
  const auto& set = p.product_set();
  const int off = set.offset(agent);
  const int di = set.block_dim(agent);
  const Vector grad = p.cost_grad(t, x_hat);
  const Matrix jac = p.constraint_jac(t, x_hat);
  return grad.segment(off, di) + jac.middleCols(off, di).transpose() * lambda_hat;
}

// Own block: P_{X_i}(xhat_i - alpha d_i); every other block copied.
inline Vector primal_update(const ProductSet& set, int agent, const Vector& x_hat, const Vector& d_i,
                            double alpha) {
  if (!(alpha > 0.0)) throw DomainError("step size must be positive");
  set.check_joint(x_hat);
  const auto& blk = set.block(agent);
  if (d_i.size() != blk.dim()) throw ShapeError("block gradient has wrong dimension");
  Vector next = x_hat;
  const int off = set.offset(agent);
  next.segment(off, blk.dim()) = blk.project(x_hat.segment(off, blk.dim()) - alpha * d_i);
  return next;
}

struct DualStep {
  Vector dual;
  std::vector<bool> upper_clipped;
  int clip_count = 0;
};

inline DualStep dual_step_from_values(const Vector& lambda_hat, const Vector& g, double alpha, double lambda_max) {
  if (!(alpha > 0.0)) throw DomainError("step size must be positive");
  if (g.size() != lambda_hat.size()) throw ShapeError("constraint and dual sizes differ");
  const Vector raw = lambda_hat + alpha * g;
  DualStep out;
  out.dual = project_dual(lambda_max, raw);
  out.upper_clipped.resize(raw.size());
  for (Eigen::Index k = 0; k < raw.size(); ++k) {
    out.upper_clipped[k] = raw(k) > lambda_max;
    out.clip_count += out.upper_clipped[k] ? 1 : 0;
  }
  return out;
}

// lambda <- clamp(lambdahat + alpha g_t(xhat), 0, lambda_max).
inline DualStep dual_update(const ProblemSequence& p, int t, const Vector& lambda_hat, const Vector& x_hat,
                            double alpha, double lambda_max) {
  return dual_step_from_values(lambda_hat, p.constraint(t, x_hat), alpha, lambda_max);
}

struct RoundDiagnostics {
  double consensus_error = 0.0;  // of the pre-round beliefs
  Vector belief_average;         // pre-round xbar_t
  Vector dual_average;           // pre-round lambdabar_t
  Vector mean_constraint_hat;    // (1/N) sum_i g_t(xhat_{i,t})
  int dual_clip_count = 0;
};

struct RoundOutput {
  Vector executed_action;
  std::vector<Vector> beliefs_hat;
  std::vector<Vector> duals_hat;
  std::vector<AgentState> next;
  RoundDiagnostics diagnostics;
};

inline Vector belief_average(std::span<const AgentState> states) {
  Vector avg = Vector::Zero(states[0].belief.size());
  for (const auto& s : states) avg += s.belief;
  return avg / static_cast<double>(states.size());
}

inline Vector dual_average(std::span<const AgentState> states) {
  Vector avg = Vector::Zero(states[0].dual.size());
  for (const auto& s : states) avg += s.dual;
  return avg / static_cast<double>(states.size());
}

// sqrt(sum_i ||x_i - xbar||^2)
inline double consensus_error(std::span<const AgentState> states) {
  const Vector avg = belief_average(states);
  double s = 0.0;
  for (const auto& st : states) s += (st.belief - avg).squaredNorm();
  return std::sqrt(s);
}

// One synchronous round: every agent reads the same pre-round snapshot.
inline RoundOutput run_round(const ProblemSequence& p, int t, std::span<const AgentState> states, const Matrix& w,
                             const AlgoParams& params) {
  const int n = static_cast<int>(states.size());
  if (n != p.num_agents()) throw ShapeError("agent count differs from the problem's block count");
  if (t < 1 || t > p.horizon()) throw IndexError("round outside the horizon");
  const auto& set = p.product_set();
  const double alpha = params.step(t);

  RoundOutput out;
  out.diagnostics.consensus_error = consensus_error(states);
  out.diagnostics.belief_average = belief_average(states);
  out.diagnostics.dual_average = dual_average(states);

  auto mixed = consensus_step(states, w);
  out.beliefs_hat = std::move(mixed.beliefs_hat);
  out.duals_hat = std::move(mixed.duals_hat);

  out.executed_action.resize(set.dim());
  for (int i = 0; i < n; ++i)
    out.executed_action.segment(set.offset(i), set.block_dim(i)) = project_block(set, i, out.beliefs_hat[i]);

  out.next.resize(n);
  out.diagnostics.mean_constraint_hat = Vector::Zero(p.num_constraints());
  for (int i = 0; i < n; ++i) {
    const Vector& xh = out.beliefs_hat[i];
    const Vector& lh = out.duals_hat[i];
    const Vector d = pseudo_gradient(p, t, i, xh, lh);
    out.next[i].belief = primal_update(set, i, xh, d, alpha);
    const Vector g = p.constraint(t, xh);
    out.diagnostics.mean_constraint_hat += g;
    auto ds = dual_step_from_values(lh, g, alpha, params.lambda_max);
    out.next[i].dual = std::move(ds.dual);
    out.diagnostics.dual_clip_count += ds.clip_count;
  }
  out.diagnostics.mean_constraint_hat /= n;
  return out;
}

inline RoundOutput run_round(const ProblemSequence& p, int t, std::span<const AgentState> states,
                             const MixingMatrix& w, const AlgoParams& params) {
  return run_round(p, t, states, w.weights(), params);
}

struct Initialization {
  enum class Kind { common, random };
  Kind kind = Kind::common;
  std::uint64_t seed = 0;
};

// Initial beliefs: the projection of 0 onto X for every agent (common), or an
// independent uniform point of X per agent (random). Duals start at zero.
inline std::vector<AgentState> initial_states(const ProblemSequence& p, const Initialization& init) {
  const auto& set = p.product_set();
  std::vector<AgentState> states(p.num_agents());
  std::mt19937_64 rng(init.seed);
  const Vector common = set.project(Vector::Zero(set.dim()));
  for (auto& s : states) {
    s.belief = init.kind == Initialization::Kind::common ? common : sample_point(set, rng);
    s.dual = Vector::Zero(p.num_constraints());
  }
  return states;
}

inline RunTrace run(const ProblemSequence& p, const MixingMatrix& mix, const AlgoParams& params,
                    const Initialization& init = {}) {
  params.validate();
  if (mix.size() != p.num_agents()) throw ShapeError("mixing matrix size differs from the agent count");
  const int T = p.horizon();
  const int m = p.num_constraints();
  const auto& set = p.product_set();

  RunTrace tr;
  tr.info = {"dopbc", p.num_agents(), set.dim(), m, T, mix.sigma(), params.lambda_max, p.bounds(), true};
  tr.reserve(T, set.dim(), m);

  auto states = initial_states(p, init);
  for (int t = 1; t <= T; ++t) {
    auto out = run_round(p, t, states, mix.weights(), params);
    const auto& dg = out.diagnostics;
    const int c = t - 1;
    tr.alpha.push_back(params.step(t));
    tr.actions.col(c) = out.executed_action;
    tr.cost_a.push_back(p.cost(t, out.executed_action));
    tr.g_a.col(c) = p.constraint(t, out.executed_action);
    tr.cost_xbar.push_back(p.cost(t, dg.belief_average));
    tr.g_xbar.col(c) = p.constraint(t, dg.belief_average);
    tr.delta.push_back(dg.consensus_error);
    tr.lambda_bar.col(c) = dg.dual_average;
    tr.g_hat_mean.col(c) = dg.mean_constraint_hat;
    tr.dual_clips.push_back(dg.dual_clip_count);
    states = std::move(out.next);
  }
  tr.final_delta = consensus_error(states);
  tr.final_lambda_bar = dual_average(states);
  return tr;
}

inline RunTrace run(const ProblemSequence& p, const Graph& graph, const AlgoParams& params,
                    const Initialization& init = {}, MixingScheme scheme = MixingScheme::lazy_metropolis) {
  if (!graph.is_connected()) throw ConnectivityError("DOPBC needs a connected communication graph");
  return run(p, build_mixing(graph, scheme), params, init);
}

}  // namespace dopbc
