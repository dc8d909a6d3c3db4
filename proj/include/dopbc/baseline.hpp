#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "dopbc/dopbc.hpp"
#include "dopbc/errors.hpp"
#include "dopbc/netgraph.hpp"
#include "dopbc/problems.hpp"
#include "dopbc/trace.hpp"

// Decision-sharing consensus primal-dual baseline for separable problems.
// Agents only hold their own decision x_i in X_i; duals are mixed over the
// graph and driven by the N-scaled local constraint N g_{i,t}(x_{i,t}).
namespace dopbc {

struct LocalState {
  Vector decision;       // x_i in X_i
  Vector dual;           // in [0, lambda_max]^m
  Vector neighbor_copy;  // joint vector of last-received decisions; diagnostics only
};

namespace detail {

// sum_i ||x_i - xbar|| over equally sized local decisions.
inline double decision_disagreement(const std::vector<LocalState>& states) {
  Vector avg = Vector::Zero(states[0].decision.size());
  for (const auto& s : states) avg += s.decision;
  avg /= static_cast<double>(states.size());
  double s = 0.0;
  for (const auto& st : states) s += (st.decision - avg).norm();
  return s;
}

}  // namespace detail

inline RunTrace run_baseline(const ProblemSequence& p, const MixingMatrix& mix, const AlgoParams& params) {
  params.validate();
  const SeparableStructure* sep = p.separable();
  if (!sep) throw CapabilityError("decision-sharing baseline needs a separable problem, got " + std::string(p.kind()));
  const auto& set = p.product_set();
  const int n = p.num_agents();
  const int m = p.num_constraints();
  const int T = p.horizon();
  for (int i = 1; i < n; ++i)
    if (set.block_dim(i) != set.block_dim(0))
      throw CapabilityError("decision disagreement needs equal block dimensions");
  if (mix.size() != n) throw ShapeError("mixing matrix size differs from the agent count");
  const Matrix& w = mix.weights();

  std::vector<LocalState> states(n);
  const Vector start = set.project(Vector::Zero(set.dim()));
  for (int i = 0; i < n; ++i) {
    states[i].decision = start.segment(set.offset(i), set.block_dim(i));
    states[i].dual = Vector::Zero(m);
    states[i].neighbor_copy = start;
  }

  RunTrace tr;
  tr.info = {"baseline-dspd", n, set.dim(), m, T, mix.sigma(), params.lambda_max, p.bounds(), false};
  tr.reserve(T, set.dim(), m);
  tr.s_alpha.reserve(T);
  tr.s_violation.reserve(T);
  double s_alpha = 0.0;
  double s_violation = 0.0;

  for (int t = 1; t <= T; ++t) {
    const double alpha = params.step(t);
    const int c = t - 1;
    Vector action(set.dim());
    for (int i = 0; i < n; ++i) action.segment(set.offset(i), set.block_dim(i)) = states[i].decision;

    Vector lam_avg = Vector::Zero(m);
    for (const auto& s : states) lam_avg += s.dual;
    lam_avg /= n;

    std::vector<LocalState> next(n);
    Vector g_sum = Vector::Zero(m);
    double violation = 0.0;
    int clips = 0;
    for (int i = 0; i < n; ++i) {
      const auto& xi = states[i].decision;
      Vector lam_hat = Vector::Zero(m);
      for (int j = 0; j < n; ++j)
        if (w(i, j) != 0.0) lam_hat += w(i, j) * states[j].dual;
      const Vector gi = sep->local_constraint(t, i, xi);
      const Vector d = sep->local_cost_grad(t, i, xi) + sep->local_constraint_jac(t, i, xi).transpose() * states[i].dual;
      next[i].decision = set.block(i).project(xi - alpha * d);
      auto ds = dual_step_from_values(lam_hat, static_cast<double>(n) * gi, alpha, params.lambda_max);
      next[i].dual = std::move(ds.dual);
      clips += ds.clip_count;
      g_sum += gi;
      violation += gi.cwiseMax(0.0).sum();

      next[i].neighbor_copy = states[i].neighbor_copy;
      next[i].neighbor_copy.segment(set.offset(i), set.block_dim(i)) = next[i].decision;
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (j != i && w(i, j) != 0.0)
          next[i].neighbor_copy.segment(set.offset(j), set.block_dim(j)) = next[j].decision;

    s_alpha += alpha;
    s_violation += alpha * violation;

    tr.alpha.push_back(alpha);
    tr.actions.col(c) = action;
    tr.cost_a.push_back(p.cost(t, action));
    tr.g_a.col(c) = p.constraint(t, action);
    tr.cost_xbar.push_back(tr.cost_a.back());
    tr.g_xbar.col(c) = tr.g_a.col(c);
    tr.delta.push_back(detail::decision_disagreement(states));
    tr.lambda_bar.col(c) = lam_avg;
    tr.g_hat_mean.col(c) = g_sum;
    tr.dual_clips.push_back(clips);
    tr.s_alpha.push_back(s_alpha);
    tr.s_violation.push_back(s_violation);
    states = std::move(next);
  }
  tr.final_delta = detail::decision_disagreement(states);
  tr.final_lambda_bar = Vector::Zero(m);
  for (const auto& s : states) tr.final_lambda_bar += s.dual;
  tr.final_lambda_bar /= n;
  return tr;
}

inline RunTrace run_baseline(const ProblemSequence& p, const Graph& graph, const AlgoParams& params,
                             MixingScheme scheme = MixingScheme::lazy_metropolis) {
  if (!p.separable()) throw CapabilityError("decision-sharing baseline needs a separable problem");
  return run_baseline(p, build_mixing(graph, scheme), params);
}

// Disagreement vs. violation accumulators of a baseline run.
struct CouplingReport {
  double disagreement_sum = 0.0;  // sum_t sum_i ||x_{i,t} - xbar_t||
  double s_alpha = 0.0;           // sum_t alpha_t
  double s_violation = 0.0;       // sum_t alpha_t sum_i [g_{i,t}(x_{i,t})]^+
  double ratio = 0.0;             // disagreement_sum / (s_alpha + s_violation)
  double trailing_ratio_mean = 0.0;
  double trailing_ratio_cv = 0.0;  // coefficient of variation over the trailing half
};

inline CouplingReport coupling_diagnostic(const RunTrace& tr) {
  const int T = tr.length();
  if (static_cast<int>(tr.s_alpha.size()) != T || static_cast<int>(tr.s_violation.size()) != T || T == 0)
    throw CapabilityError("coupling diagnostic needs a decision-sharing baseline trace");
  CouplingReport r;
  std::vector<double> ratios;
  double lhs = 0.0;
  for (int t = 0; t < T; ++t) {
    lhs += tr.delta[t];
    const double rhs = tr.s_alpha[t] + tr.s_violation[t];
    if (t >= T / 2) ratios.push_back(rhs > 0.0 ? lhs / rhs : 0.0);
  }
  r.disagreement_sum = lhs;
  r.s_alpha = tr.s_alpha.back();
  r.s_violation = tr.s_violation.back();
  r.ratio = (r.s_alpha + r.s_violation) > 0.0 ? lhs / (r.s_alpha + r.s_violation) : 0.0;
  const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / ratios.size();
  double var = 0.0;
  for (double v : ratios) var += (v - mean) * (v - mean);
  var /= ratios.size();
  r.trailing_ratio_mean = mean;
  r.trailing_ratio_cv = mean > 0.0 ? std::sqrt(var) / mean : 0.0;
  return r;
}

}  // namespace dopbc
