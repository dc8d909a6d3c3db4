#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dopbc/errors.hpp"
#include "dopbc/problems.hpp"
#include "dopbc/trace.hpp"

namespace dopbc {

// Which per-round sequence a metric is evaluated on.
enum class Sequence { action, belief_average };

namespace detail {

inline const std::vector<double>& costs_of(const RunTrace& tr, Sequence s) {
  return s == Sequence::action ? tr.cost_a : tr.cost_xbar;
}

inline const Matrix& constraints_of(const RunTrace& tr, Sequence s) {
  return s == Sequence::action ? tr.g_a : tr.g_xbar;
}

inline void require_comparator(const RunTrace& tr, const Comparator& comp, const ProblemSequence& p) {
  if (tr.length() != p.horizon())
    throw ShapeError("trace has " + std::to_string(tr.length()) + " rounds, problem horizon is " +
                     std::to_string(p.horizon()));
  if (comp.feasibility_margin > 1e-6)
    throw InfeasibilityError("comparator violates a constraint by " + std::to_string(comp.feasibility_margin));
}

}  // namespace detail

// Running sum_{s<=t} (f_s(a_s) - f_s(x*)).
inline std::vector<double> cumulative_regret(const RunTrace& tr, const Comparator& comp, const ProblemSequence& p,
                                             Sequence seq = Sequence::action) {
  detail::require_comparator(tr, comp, p);
  const auto& costs = detail::costs_of(tr, seq);
  std::vector<double> out(tr.length());
  double acc = 0.0;
  for (int t = 1; t <= tr.length(); ++t) {
    acc += costs[t - 1] - p.cost(t, comp.x_star);
    out[t - 1] = acc;
  }
  return out;
}

// sum_t f_t(a_t) - sum_t f_t(x*). Not clamped: a suboptimal comparator can
// make it negative.
inline double static_regret(const RunTrace& tr, const Comparator& comp, const ProblemSequence& p,
                            Sequence seq = Sequence::action) {
  return cumulative_regret(tr, comp, p, seq).back();
}

inline std::vector<double> cumulative_ccv(const RunTrace& tr, int k, Sequence seq = Sequence::action) {
  const Matrix& g = detail::constraints_of(tr, seq);
  if (k < 0 || k >= g.rows())
    throw IndexError("constraint index " + std::to_string(k) + " out of range [0, " + std::to_string(g.rows()) + ")");
  std::vector<double> out(tr.length());
  double acc = 0.0;
  for (int t = 0; t < tr.length(); ++t) {
    acc += std::max(0.0, g(k, t));
    out[t] = acc;
  }
  return out;
}

// C_k(T) = sum_t [g_{k,t}(a_t)]^+
inline double ccv(const RunTrace& tr, int k, Sequence seq = Sequence::action) {
  const auto c = cumulative_ccv(tr, k, seq);
  return c.empty() ? 0.0 : c.back();
}

struct SlopeFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (ln T, ln metric)
  // "" when the fit is regular; "zero" when every metric was 0 (exponent
  // reported as 0); "nonpositive" when some metric was <= 0.
  std::string flag;

  bool ok() const { return flag.empty(); }
};

// Ordinary least squares of ln metric on ln T.
inline SlopeFit fit_growth_exponent(const std::vector<std::pair<double, double>>& samples) {
  if (samples.size() < 4)
    throw InsufficientDataError("growth fit needs at least 4 horizons, got " + std::to_string(samples.size()));
  SlopeFit fit;
  if (std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.second == 0.0; })) {
    fit.flag = "zero";
    return fit;
  }
  if (std::any_of(samples.begin(), samples.end(), [](const auto& s) { return !(s.second > 0.0); })) {
    fit.flag = "nonpositive";
    fit.exponent = std::numeric_limits<double>::quiet_NaN();
    fit.intercept = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  const double n = static_cast<double>(samples.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [T, v] : samples) {
    if (!(T > 0.0)) throw DomainError("horizons must be positive");
    fit.points.emplace_back(std::log(T), std::log(v));
    mx += fit.points.back().first;
    my += fit.points.back().second;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : fit.points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) throw DomainError("growth fit needs distinct horizons");
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  return fit;
}

// G_d = G_f + sqrt(m) lambda_max G_g bounds every pseudo-gradient norm.
inline double pseudo_gradient_bound(const TraceInfo& info) {
  return info.bounds.grad_f +
         std::sqrt(static_cast<double>(info.num_constraints)) * info.lambda_max * info.bounds.jac_g;
}

struct ConsensusSum {
  double sum = 0.0;      // sum_t delta_{x,t}
  double ceiling = 0.0;  // sqrt(N) G_d / (1 - sigma) * sum_t alpha_t
};

inline ConsensusSum consensus_error_sum(const RunTrace& tr) {
  ConsensusSum s;
  double alpha_sum = 0.0;
  for (int t = 0; t < tr.length(); ++t) {
    s.sum += tr.delta[t];
    alpha_sum += tr.alpha[t];
  }
  const auto& info = tr.info;
  s.ceiling = std::sqrt(static_cast<double>(info.num_agents)) * pseudo_gradient_bound(info) /
              (1.0 - info.sigma) * alpha_sum;
  return s;
}

struct InequalityCheck {
  int rounds = 0;
  int checked = 0;
  int violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();  // min of rhs - lhs
  bool passed() const { return violations == 0; }
};

// delta_{t+1}^2 <= (1+beta) sigma^2 delta_t^2 + (1+1/beta) alpha^2 N G_d^2,
// beta = (1-sigma)/(1+sigma), for every round.
inline InequalityCheck check_consensus_recursion(const RunTrace& tr, double tol = 1e-9) {
  const auto& info = tr.info;
  const double sigma = info.sigma;
  const double beta = (1.0 - sigma) / (1.0 + sigma);
  const double gd = pseudo_gradient_bound(info);
  InequalityCheck c;
  c.rounds = tr.length();
  for (int t = 0; t < tr.length(); ++t) {
    const double next = t + 1 < tr.length() ? tr.delta[t + 1] : tr.final_delta;
    const double lhs = next * next;
    const double rhs = (1.0 + beta) * sigma * sigma * tr.delta[t] * tr.delta[t] +
                       (1.0 + 1.0 / beta) * tr.alpha[t] * tr.alpha[t] * info.num_agents * gd * gd;
    ++c.checked;
    c.worst_slack = std::min(c.worst_slack, rhs - lhs);
    if (lhs > rhs + tol) ++c.violations;
  }
  return c;
}

// On rounds without an upper dual clip:
// lambdabar_{t+1} - lambdabar_t >= alpha (1/N) sum_i g_t(xhat_{i,t}).
inline InequalityCheck check_dual_telescoping(const RunTrace& tr, double tol = 1e-12) {
  InequalityCheck c;
  c.rounds = tr.length();
  for (int t = 0; t < tr.length(); ++t) {
    if (tr.dual_clips[t] != 0) continue;
    const Vector next = t + 1 < tr.length() ? Vector(tr.lambda_bar.col(t + 1)) : tr.final_lambda_bar;
    const Vector slack = next - tr.lambda_bar.col(t) - tr.alpha[t] * tr.g_hat_mean.col(t);
    ++c.checked;
    c.worst_slack = std::min(c.worst_slack, slack.minCoeff());
    if (slack.minCoeff() < -tol) ++c.violations;
  }
  return c;
}

inline double unclipped_fraction(const RunTrace& tr) {
  if (tr.length() == 0) return 1.0;
  const auto clean = std::count(tr.dual_clips.begin(), tr.dual_clips.end(), 0);
  return static_cast<double>(clean) / tr.length();
}

}  // namespace dopbc
