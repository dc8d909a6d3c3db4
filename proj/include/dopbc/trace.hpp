#pragma once

#include <string>
#include <vector>

#include "dopbc/problems.hpp"
#include "dopbc/types.hpp"

namespace dopbc {

struct TraceInfo {
  std::string algorithm;
  int num_agents = 0;
  int dim = 0;
  int num_constraints = 0;
  int horizon = 0;
  double sigma = 0.0;
  double lambda_max = 0.0;
  DeclaredBounds bounds;
  // false when the algorithm keeps no joint beliefs; the x-bar columns then
  // repeat the executed-action columns.
  bool has_belief_average = true;
};

// Per-round record of one run. Column t-1 (or entry t-1) holds round t.
struct RunTrace {
  TraceInfo info;
  std::vector<double> alpha;
  Matrix actions;                // d x T, executed joint action a_t
  std::vector<double> cost_a;    // f_t(a_t)
  std::vector<double> cost_xbar; // f_t(xbar_t)
  Matrix g_a;                    // m x T, g_t(a_t)
  Matrix g_xbar;                 // m x T, g_t(xbar_t)
  std::vector<double> delta;     // consensus error of the pre-round states
  Matrix lambda_bar;             // m x T, pre-round average dual
  Matrix g_hat_mean;             // m x T, (1/N) sum_i g_t(xhat_{i,t})
  std::vector<int> dual_clips;   // coordinates clipped at lambda_max
  double final_delta = 0.0;      // consensus error after round T
  Vector final_lambda_bar;       // average dual after round T
  // Decision-sharing baseline only: running sums of alpha_t and of
  // alpha_t sum_i [g_{i,t}(x_{i,t})]^+.
  std::vector<double> s_alpha;
  std::vector<double> s_violation;

  int length() const noexcept { return static_cast<int>(cost_a.size()); }

  void reserve(int T, int d, int m) {
    alpha.reserve(T);
    actions.resize(d, T);
    cost_a.reserve(T);
    cost_xbar.reserve(T);
    g_a.resize(m, T);
    g_xbar.resize(m, T);
    delta.reserve(T);
    lambda_bar.resize(m, T);
    g_hat_mean.resize(m, T);
    dual_clips.reserve(T);
  }
};

}  // namespace dopbc
