#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dopbc/errors.hpp"
#include "dopbc/geometry.hpp"
#include "dopbc/types.hpp"

namespace dopbc {

// Regularity constants a problem instance certifies on X.
struct DeclaredBounds {
  double grad_f = 0.0;       // ||grad f_t(x)|| <= grad_f
  double jac_g = 0.0;        // ||J g_t(x)||_F <= jac_g
  double lipschitz_g = 0.0;  // every component g_{k,t} is lipschitz_g-Lipschitz
  double diameter = 0.0;     // diameter of the joint set
};

// Per-agent view of a separable instance:
// f_t(x) = sum_i f_{i,t}(x_i) and g_t(x) = sum_i g_{i,t}(x_i).
class SeparableStructure {
 public:
  virtual ~SeparableStructure() = default;
  virtual double local_cost(int t, int agent, const Vector& xi) const = 0;
  virtual Vector local_cost_grad(int t, int agent, const Vector& xi) const = 0;
  virtual Vector local_constraint(int t, int agent, const Vector& xi) const = 0;
  virtual Matrix local_constraint_jac(int t, int agent, const Vector& xi) const = 0;
};

// Sequence of rounds t = 1..T, each revealing a cost f_t and m constraints
// g_t over the joint set X. Oracles are pure functions of (t, x).
class ProblemSequence {
 public:
  ProblemSequence(int horizon, ProductSet set, int num_constraints)
      : horizon_(horizon), set_(std::move(set)), m_(num_constraints) {
    if (horizon < 1) throw InvalidSizeError("horizon must be at least 1");
    if (num_constraints < 1) throw InvalidSizeError("need at least one constraint");
  }
  virtual ~ProblemSequence() = default;

  int horizon() const noexcept { return horizon_; }
  const ProductSet& product_set() const noexcept { return set_; }
  int dim() const noexcept { return set_.dim(); }
  int num_agents() const noexcept { return set_.num_blocks(); }
  int num_constraints() const noexcept { return m_; }
  const DeclaredBounds& bounds() const noexcept { return bounds_; }

  virtual std::string_view kind() const = 0;
  virtual double cost(int t, const Vector& x) const = 0;
  virtual Vector cost_grad(int t, const Vector& x) const = 0;
  virtual Vector constraint(int t, const Vector& x) const = 0;
  virtual Matrix constraint_jac(int t, const Vector& x) const = 0;

  // sum_t f_t(x). The default loops over rounds; instances may override
  // with an exact aggregate.
  virtual double total_cost(const Vector& x) const {
    double s = 0.0;
    for (int t = 1; t <= horizon_; ++t) s += cost(t, x);
    return s;
  }

  virtual Vector total_cost_grad(const Vector& x) const {
    Vector g = Vector::Zero(dim());
    for (int t = 1; t <= horizon_; ++t) g += cost_grad(t, x);
    return g;
  }

  // max_t g_{k,t}(x) per component.
  virtual Vector constraint_envelope(const Vector& x) const {
    Vector env = Vector::Constant(m_, -std::numeric_limits<double>::infinity());
    for (int t = 1; t <= horizon_; ++t) env = env.cwiseMax(constraint(t, x));
    return env;
  }

  // Row k is a gradient of g_{k,t*}(x) with t* attaining the envelope.
  virtual Matrix constraint_envelope_jac(const Vector& x) const {
    Matrix jac(m_, dim());
    Vector best = Vector::Constant(m_, -std::numeric_limits<double>::infinity());
    for (int t = 1; t <= horizon_; ++t) {
      const Vector g = constraint(t, x);
      for (int k = 0; k < m_; ++k) {
        if (g(k) > best(k)) {
          best(k) = g(k);
          jac.row(k) = constraint_jac(t, x).row(k);
        }
      }
    }
    return jac;
  }

  // Known lower bound on every f_t over X, when the instance has one.
  virtual std::optional<double> cost_lower_bound() const { return std::nullopt; }

  // Closed-form hindsight optimizer, when the instance has one.
  virtual std::optional<Vector> analytic_optimum() const { return std::nullopt; }

  virtual const SeparableStructure* separable() const { return nullptr; }

 protected:
  void set_bounds(DeclaredBounds b) { bounds_ = b; }

  void check_round(int t) const {
    if (t < 1 || t > horizon_)
      throw IndexError("round " + std::to_string(t) + " outside [1, " + std::to_string(horizon_) + "]");
  }

 private:
  int horizon_;
  ProductSet set_;
  int m_;
  DeclaredBounds bounds_;
};

using ProblemPtr = std::shared_ptr<const ProblemSequence>;

// ---------------------------------------------------------------------------
// Coupled quadratic family (nonseparable cost and constraints).
//
//   f_t(x)     = ||A x - b_t||^2,          b_t = b0 + drift sin(w t) u
//   g_{k,t}(x) = x'Q_k x + q_{k,t}'x - rho_{k,t}
//   q_{k,t}    = q_k + e_{k,t} v_k,        rho_{k,t} = rho_k + e_{k,t} s_k
//   e_{k,t}    = cdrift (1 + sin(w t + phi_k)) / (2 sqrt(t)),   s_k = max_X v_k'x
//
// e_{k,t} >= 0 and v_k'x - s_k <= 0 on X, so the constraint perturbation only
// ever loosens g_k relative to its base x'Q_k x + q_k'x - rho_k.
// ---------------------------------------------------------------------------
struct CoupledQuadraticData {
  Matrix a;
  Vector b0;
  Vector drift_dir;
  double drift = 0.0;
  double omega = 0.05;
  std::vector<Matrix> q_mat;
  std::vector<Vector> q_lin;
  Vector rho;
  std::vector<Vector> q_dir;  // v_k
  Vector phase;               // phi_k
  double constraint_drift = 0.0;
};

class CoupledQuadratic final : public ProblemSequence {
 public:
  CoupledQuadratic(int horizon, ProductSet set, CoupledQuadraticData data)
      : ProblemSequence(horizon, std::move(set), static_cast<int>(data.q_mat.size())),
        d_(std::move(data)) {
    const int n = dim();
    const int m = num_constraints();
    if (d_.a.cols() != n || d_.b0.size() != d_.a.rows() || d_.drift_dir.size() != d_.a.rows())
      throw ShapeError("cost data does not match the joint dimension");
    if (static_cast<int>(d_.q_lin.size()) != m || d_.rho.size() != m)
      throw ShapeError("constraint data counts disagree");
    if (d_.q_dir.empty()) d_.q_dir.assign(m, Vector::Zero(n));
    if (d_.phase.size() == 0) d_.phase = Vector::Zero(m);
    if (static_cast<int>(d_.q_dir.size()) != m || d_.phase.size() != m)
      throw ShapeError("constraint drift data counts disagree");
    for (int k = 0; k < m; ++k) {
      if (d_.q_mat[k].rows() != n || d_.q_mat[k].cols() != n || d_.q_lin[k].size() != n ||
          d_.q_dir[k].size() != n)
        throw ShapeError("constraint " + std::to_string(k) + " has wrong dimension");
    }
    if (d_.drift < 0.0 || d_.constraint_drift < 0.0) throw DomainError("drift must be nonnegative");
    precompute();
  }

  std::string_view kind() const override { return "coupled-quadratic"; }
  std::optional<double> cost_lower_bound() const override { return 0.0; }
  const CoupledQuadraticData& data() const noexcept { return d_; }

  Vector target(int t) const {
    return d_.b0 + d_.drift * std::sin(d_.omega * t) * d_.drift_dir;
  }

  double loosening(int t, int k) const {
    return d_.constraint_drift * (1.0 + std::sin(d_.omega * t + d_.phase(k))) /
           (2.0 * std::sqrt(static_cast<double>(t)));
  }

  double cost(int t, const Vector& x) const override {
    check_round(t);
    return (d_.a * x - target(t)).squaredNorm();
  }

  Vector cost_grad(int t, const Vector& x) const override {
    check_round(t);
    return 2.0 * d_.a.transpose() * (d_.a * x - target(t));
  }

  Vector constraint(int t, const Vector& x) const override {
    check_round(t);
    Vector g(num_constraints());
    for (int k = 0; k < num_constraints(); ++k)
      g(k) = base_constraint(k, x) + loosening(t, k) * (d_.q_dir[k].dot(x) - support_[k]);
    return g;
  }

  Matrix constraint_jac(int t, const Vector& x) const override {
    check_round(t);
    Matrix j(num_constraints(), dim());
    for (int k = 0; k < num_constraints(); ++k)
      j.row(k) = (2.0 * d_.q_mat[k] * x + d_.q_lin[k] + loosening(t, k) * d_.q_dir[k]).transpose();
    return j;
  }

  // sum_t ||A x - b_t||^2 = T ||A x - mean b||^2 + sum_t ||b_t - mean b||^2
  double total_cost(const Vector& x) const override {
    return horizon() * (d_.a * x - b_mean_).squaredNorm() + b_spread_;
  }

  Vector total_cost_grad(const Vector& x) const override {
    return 2.0 * horizon() * d_.a.transpose() * (d_.a * x - b_mean_);
  }

  Vector constraint_envelope(const Vector& x) const override {
    Vector env(num_constraints());
    for (int k = 0; k < num_constraints(); ++k) {
      const double slope = d_.q_dir[k].dot(x) - support_[k];
      env(k) = base_constraint(k, x) + (slope <= 0.0 ? eps_min_[k] : eps_max_[k]) * slope;
    }
    return env;
  }

  Matrix constraint_envelope_jac(const Vector& x) const override {
    Matrix j(num_constraints(), dim());
    for (int k = 0; k < num_constraints(); ++k) {
      const double slope = d_.q_dir[k].dot(x) - support_[k];
      const double e = slope <= 0.0 ? eps_min_[k] : eps_max_[k];
      j.row(k) = (2.0 * d_.q_mat[k] * x + d_.q_lin[k] + e * d_.q_dir[k]).transpose();
    }
    return j;
  }

 private:
  double base_constraint(int k, const Vector& x) const {
    return x.dot(d_.q_mat[k] * x) + d_.q_lin[k].dot(x) - d_.rho(k);
  }

  void precompute() {
    const int T = horizon();
    const int m = num_constraints();
    b_mean_ = Vector::Zero(d_.a.rows());
    for (int t = 1; t <= T; ++t) b_mean_ += target(t);
    b_mean_ /= T;
    b_spread_ = 0.0;
    for (int t = 1; t <= T; ++t) b_spread_ += (target(t) - b_mean_).squaredNorm();

    support_.resize(m);
    eps_min_.assign(m, std::numeric_limits<double>::infinity());
    eps_max_.assign(m, 0.0);
    for (int k = 0; k < m; ++k) {
      support_[k] = product_set().support(d_.q_dir[k]);
      for (int t = 1; t <= T; ++t) {
        eps_min_[k] = std::min(eps_min_[k], loosening(t, k));
        eps_max_[k] = std::max(eps_max_[k], loosening(t, k));
      }
    }

    // Certified constants via the triangle inequality on X.
    const double rx = product_set().max_norm();
    const double a_norm = Eigen::JacobiSVD<Matrix>(d_.a).singularValues()(0);
    const double b_max = d_.b0.norm() + d_.drift * d_.drift_dir.norm();
    DeclaredBounds b;
    b.grad_f = 2.0 * a_norm * (a_norm * rx + b_max);
    double frob2 = 0.0;
    for (int k = 0; k < m; ++k) {
      const double q_norm = Eigen::SelfAdjointEigenSolver<Matrix>(
                                0.5 * (d_.q_mat[k] + d_.q_mat[k].transpose()), Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .cwiseAbs()
                                .maxCoeff();
      const double lk = 2.0 * q_norm * rx + d_.q_lin[k].norm() + d_.constraint_drift * d_.q_dir[k].norm();
      frob2 += lk * lk;
      b.lipschitz_g = std::max(b.lipschitz_g, lk);
    }
    b.jac_g = std::sqrt(frob2);
    b.diameter = product_set().diameter();
    // Absorb rounding in the norm computations.
    b.grad_f *= 1.0 + 1e-12;
    b.jac_g *= 1.0 + 1e-12;
    b.lipschitz_g *= 1.0 + 1e-12;
    set_bounds(b);
  }

  CoupledQuadraticData d_;
  Vector b_mean_;
  double b_spread_ = 0.0;
  std::vector<double> support_;
  std::vector<double> eps_min_;
  std::vector<double> eps_max_;
};

namespace detail {

inline Vector unit_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (int j = 0; j < n; ++j) v(j) = normal(rng);
  return v / v.norm();
}

inline ProductSet symmetric_cube_set(int n_agents, int d_i) {
  std::vector<ConvexSet> blocks;
  blocks.reserve(n_agents);
  for (int i = 0; i < n_agents; ++i) blocks.push_back(ConvexSet::cube(d_i, -1.0, 1.0));
  return ProductSet(std::move(blocks));
}

inline void require_positive(int v, const char* what) {
  if (v < 1) throw InvalidSizeError(std::string(what) + " must be positive");
}

}  // namespace detail

// Random coupled instance on X_i = [-1, 1]^{d_i}. Cost targets sit at an
// interior point that the base constraints cut off, so constraints bind.
// Every constraint keeps g_{k,t}(0) <= -0.1 (Slater point at the center).
inline std::shared_ptr<CoupledQuadratic> make_coupled_quadratic(int n_agents, int d_i, int m, int horizon,
                                                                std::uint64_t seed, double drift) {
  detail::require_positive(n_agents, "agent count");
  detail::require_positive(d_i, "block dimension");
  detail::require_positive(m, "constraint count");
  detail::require_positive(horizon, "horizon");
  if (!(drift >= 0.0)) throw DomainError("drift must be nonnegative");
  const int n = n_agents * d_i;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  CoupledQuadraticData data;
  data.a = Matrix::Identity(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) data.a(r, c) += 0.3 * normal(rng) / std::sqrt(static_cast<double>(n));
  for (int r = 0; r < n; ++r) data.a.row(r).normalize();

  Vector x_target(n);
  for (int j = 0; j < n; ++j) x_target(j) = -0.8 + 1.6 * unit(rng);
  data.b0 = data.a * x_target;
  data.drift_dir = detail::unit_vector(n, rng);
  data.drift = drift;
  data.omega = 0.05;
  data.constraint_drift = drift;
  data.rho.resize(m);
  data.phase.resize(m);
  for (int k = 0; k < m; ++k) {
    Matrix b(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) b(r, c) = normal(rng) / std::sqrt(static_cast<double>(n));
    Matrix q = b.transpose() * b;
    const double top = Eigen::SelfAdjointEigenSolver<Matrix>(q, Eigen::EigenvaluesOnly).eigenvalues()(n - 1);
    q *= 0.5 / top;
    Vector lin(n);
    for (int j = 0; j < n; ++j) lin(j) = 0.1 * normal(rng);
    const double at_target = x_target.dot(q * x_target) + lin.dot(x_target);
    data.rho(k) = std::max(0.5 * at_target, 0.1);
    data.q_mat.push_back(std::move(q));
    data.q_lin.push_back(std::move(lin));
    data.q_dir.push_back(detail::unit_vector(n, rng));
    data.phase(k) = 2.0 * std::numbers::pi * unit(rng);
  }
  return std::make_shared<CoupledQuadratic>(horizon, detail::symmetric_cube_set(n_agents, d_i),
                                            std::move(data));
}

// ---------------------------------------------------------------------------
// Separable quadratic family:
//   f_{i,t}(x_i) = ||x_i - b_{i,t}||^2,   g_{i,t}(x_i) = 1'x_i - rho / N
// so the joint constraint is the budget 1'x <= rho.
// ---------------------------------------------------------------------------
struct SeparableQuadraticData {
  Vector b0;         // joint target, length d
  Vector drift_dir;  // joint, length d
  double drift = 0.0;
  double omega = 0.05;
  double rho = 1.0;
};

class SeparableQuadratic final : public ProblemSequence, public SeparableStructure {
 public:
  SeparableQuadratic(int horizon, ProductSet set, SeparableQuadraticData data)
      : ProblemSequence(horizon, std::move(set), 1), d_(std::move(data)) {
    if (d_.b0.size() != dim() || d_.drift_dir.size() != dim())
      throw ShapeError("separable data does not match the joint dimension");
    if (d_.drift < 0.0) throw DomainError("drift must be nonnegative");
    b_mean_ = Vector::Zero(dim());
    for (int t = 1; t <= horizon; ++t) b_mean_ += target(t);
    b_mean_ /= horizon;
    b_spread_ = 0.0;
    for (int t = 1; t <= horizon; ++t) b_spread_ += (target(t) - b_mean_).squaredNorm();

    const double rx = product_set().max_norm();
    DeclaredBounds b;
    b.grad_f = 2.0 * (rx + d_.b0.norm() + d_.drift * d_.drift_dir.norm()) * (1.0 + 1e-12);
    b.jac_g = std::sqrt(static_cast<double>(dim()));
    b.lipschitz_g = b.jac_g;
    b.diameter = product_set().diameter();
    set_bounds(b);
  }

  std::string_view kind() const override { return "separable-quadratic"; }
  std::optional<double> cost_lower_bound() const override { return 0.0; }
  const SeparableQuadraticData& data() const noexcept { return d_; }
  const SeparableStructure* separable() const override { return this; }

  Vector target(int t) const { return d_.b0 + d_.drift * std::sin(d_.omega * t) * d_.drift_dir; }

  double cost(int t, const Vector& x) const override {
    check_round(t);
    return (x - target(t)).squaredNorm();
  }
  Vector cost_grad(int t, const Vector& x) const override {
    check_round(t);
    return 2.0 * (x - target(t));
  }
  Vector constraint(int t, const Vector& x) const override {
    check_round(t);
    return Vector::Constant(1, x.sum() - d_.rho);
  }
  Matrix constraint_jac(int t, const Vector& x) const override {
    check_round(t);
    return Matrix::Ones(1, x.size());
  }

  double total_cost(const Vector& x) const override {
    return horizon() * (x - b_mean_).squaredNorm() + b_spread_;
  }
  Vector total_cost_grad(const Vector& x) const override { return 2.0 * horizon() * (x - b_mean_); }
  Vector constraint_envelope(const Vector& x) const override { return Vector::Constant(1, x.sum() - d_.rho); }
  Matrix constraint_envelope_jac(const Vector& x) const override { return Matrix::Ones(1, x.size()); }

  // Projection of the mean target onto X intersected with {1'x <= rho}:
  // x(mu) = clamp(mean b - mu/2), with mu >= 0 found by bisection.
  std::optional<Vector> analytic_optimum() const override {
    const Box bb = product_set().bounding_box();
    for (int i = 0; i < num_agents(); ++i)
      if (!product_set().block(i).is_box()) return std::nullopt;
    auto at = [&](double mu) { return Vector((b_mean_.array() - 0.5 * mu).cwiseMax(bb.lo.array()).cwiseMin(bb.hi.array())); };
    if (at(0.0).sum() <= d_.rho) return at(0.0);
    if (bb.lo.sum() > d_.rho) return std::nullopt;
    double lo = 0.0, hi = 1.0;
    while (at(hi).sum() > d_.rho) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (at(mid).sum() > d_.rho ? lo : hi) = mid;
    }
    return at(hi);
  }

  double local_cost(int t, int agent, const Vector& xi) const override {
    check_round(t);
    return (xi - block_of(target(t), agent)).squaredNorm();
  }
  Vector local_cost_grad(int t, int agent, const Vector& xi) const override {
    check_round(t);
    return 2.0 * (xi - block_of(target(t), agent));
  }
  Vector local_constraint(int t, int agent, const Vector& xi) const override {
    check_round(t);
    (void)product_set().block(agent);
    return Vector::Constant(1, xi.sum() - d_.rho / num_agents());
  }
  Matrix local_constraint_jac(int t, int agent, const Vector& xi) const override {
    check_round(t);
    (void)product_set().block(agent);
    return Matrix::Ones(1, xi.size());
  }

 private:
  Vector block_of(const Vector& joint, int agent) const {
    const auto& s = product_set();
    return joint.segment(s.offset(agent), s.block_dim(agent));
  }

  SeparableQuadraticData d_;
  Vector b_mean_;
  double b_spread_ = 0.0;
};

inline std::shared_ptr<SeparableQuadratic> make_separable_quadratic(int n_agents, int d_i, int horizon,
                                                                    std::uint64_t seed, double drift = 0.5) {
  detail::require_positive(n_agents, "agent count");
  detail::require_positive(d_i, "block dimension");
  detail::require_positive(horizon, "horizon");
  if (!(drift >= 0.0)) throw DomainError("drift must be nonnegative");
  const int n = n_agents * d_i;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SeparableQuadraticData data;
  data.b0.resize(n);
  for (int j = 0; j < n; ++j) data.b0(j) = 0.2 + 0.7 * unit(rng);
  data.drift_dir = detail::unit_vector(n, rng);
  data.drift = drift;
  data.omega = 0.05;
  data.rho = std::max(0.5 * data.b0.sum(), 0.1);
  return std::make_shared<SeparableQuadratic>(horizon, detail::symmetric_cube_set(n_agents, d_i),
                                              std::move(data));
}

// ---------------------------------------------------------------------------
// Problem assembled from callables; mostly for small hand-checked instances.
// ---------------------------------------------------------------------------
struct CustomProblemSpec {
  int horizon = 1;
  int num_constraints = 1;
  std::function<double(int, const Vector&)> cost;
  std::function<Vector(int, const Vector&)> cost_grad;
  std::function<Vector(int, const Vector&)> constraint;
  std::function<Matrix(int, const Vector&)> constraint_jac;
  DeclaredBounds bounds;
  std::optional<Vector> analytic;
};

class CustomProblem final : public ProblemSequence {
 public:
  CustomProblem(ProductSet set, CustomProblemSpec spec)
      : ProblemSequence(spec.horizon, std::move(set), spec.num_constraints), s_(std::move(spec)) {
    if (!s_.cost || !s_.cost_grad || !s_.constraint || !s_.constraint_jac)
      throw DomainError("custom problem needs all four oracles");
    DeclaredBounds b = s_.bounds;
    if (b.diameter == 0.0) b.diameter = product_set().diameter();
    set_bounds(b);
  }

  std::string_view kind() const override { return "custom"; }
  double cost(int t, const Vector& x) const override { check_round(t); return s_.cost(t, x); }
  Vector cost_grad(int t, const Vector& x) const override { check_round(t); return s_.cost_grad(t, x); }
  Vector constraint(int t, const Vector& x) const override { check_round(t); return s_.constraint(t, x); }
  Matrix constraint_jac(int t, const Vector& x) const override { check_round(t); return s_.constraint_jac(t, x); }
  std::optional<Vector> analytic_optimum() const override { return s_.analytic; }

 private:
  CustomProblemSpec s_;
};

// ---------------------------------------------------------------------------
// Hindsight comparator: best fixed action feasible at every round.
// ---------------------------------------------------------------------------
enum class ComparatorMethod { analytic, grid, subgradient };

inline std::string_view to_string(ComparatorMethod m) {
  switch (m) {
    case ComparatorMethod::analytic: return "analytic";
    case ComparatorMethod::grid: return "grid";
    case ComparatorMethod::subgradient: return "subgradient";
  }
  return "?";
}

inline std::optional<ComparatorMethod> parse_comparator(std::string_view s) {
  for (auto m : {ComparatorMethod::analytic, ComparatorMethod::grid, ComparatorMethod::subgradient})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct Comparator {
  Vector x_star;
  double objective_value = 0.0;     // sum_t f_t(x_star)
  double feasibility_margin = 0.0;  // max_{t,k} g_{k,t}(x_star)
  ComparatorMethod method = ComparatorMethod::subgradient;
};

struct ComparatorOptions {
  double grid_resolution = 1e-2;  // grid spacing as a fraction of the diameter
  int grid_refinements = 3;       // zoom passes, each 10x finer around the incumbent
  double grid_feasibility = 1e-9;
  int subgradient_iterations = 100000;
  double initial_penalty = 1.0;
  int max_escalations = 8;
  double feasibility_tolerance = 1e-6;
};

namespace detail {

inline Comparator finish_comparator(const ProblemSequence& p, Vector x, ComparatorMethod method) {
  Comparator c;
  c.objective_value = p.total_cost(x);
  c.feasibility_margin = p.constraint_envelope(x).maxCoeff();
  c.x_star = std::move(x);
  c.method = method;
  return c;
}

// Exhaustive search over a lattice in [lo, hi] with `count` points per axis.
inline bool grid_pass(const ProblemSequence& p, const Vector& lo, const Vector& hi, int count,
                      double feas_tol, Vector& best, double& best_value) {
  const int d = p.dim();
  std::vector<int> idx(d, 0);
  Vector x(d);
  bool found = false;
  while (true) {
    for (int j = 0; j < d; ++j)
      x(j) = count == 1 ? lo(j) : lo(j) + (hi(j) - lo(j)) * idx[j] / static_cast<double>(count - 1);
    if (p.product_set().contains(x, 0.0) && p.constraint_envelope(x).maxCoeff() <= feas_tol) {
      const double v = p.total_cost(x);
      if (v < best_value) {
        best_value = v;
        best = x;
        found = true;
      }
    }
    int j = 0;
    while (j < d && ++idx[j] == count) idx[j++] = 0;
    if (j == d) break;
  }
  return found;
}

inline Comparator grid_comparator(const ProblemSequence& p, const ComparatorOptions& opt) {
  const int d = p.dim();
  if (d > 4) throw DimensionalityError("grid comparator supports d <= 4, got d = " + std::to_string(d));
  const Box bb = p.product_set().bounding_box();
  double h = opt.grid_resolution * p.product_set().diameter();
  if (!(h > 0.0)) h = 1.0;
  const double widest = (bb.hi - bb.lo).maxCoeff();
  const int count = std::max(2, static_cast<int>(std::ceil(widest / h)) + 1);
  Vector best;
  double best_value = std::numeric_limits<double>::infinity();
  if (!grid_pass(p, bb.lo, bb.hi, count, opt.grid_feasibility, best, best_value))
    throw InfeasibilityError("grid search found no point feasible at every round");
  double spacing = widest / (count - 1);
  for (int r = 0; r < opt.grid_refinements; ++r) {
    const Vector lo = (best.array() - spacing).cwiseMax(bb.lo.array());
    const Vector hi = (best.array() + spacing).cwiseMin(bb.hi.array());
    grid_pass(p, lo, hi, 21, opt.grid_feasibility, best, best_value);
    spacing /= 10.0;
  }
  return finish_comparator(p, best, ComparatorMethod::grid);
}

// Projected normalized subgradient on
//   F(x) = sum_t f_t(x) + mu T sum_k [max_t g_{k,t}(x)]^+
// with steps D / sqrt(s); mu grows 10x while the penalized minimizer is
// still infeasible.
inline Comparator subgradient_comparator(const ProblemSequence& p, const ComparatorOptions& opt) {
  const auto& set = p.product_set();
  const double diam = std::max(set.diameter(), 1e-12);
  const double T = p.horizon();
  Vector x = set.center();
  Vector best_feasible;
  double best_feasible_value = std::numeric_limits<double>::infinity();
  double mu = opt.initial_penalty;

  for (int level = 0; level <= opt.max_escalations; ++level, mu *= 10.0) {
    Vector best_pen = x;
    double best_pen_value = std::numeric_limits<double>::infinity();
    for (int s = 1; s <= opt.subgradient_iterations; ++s) {
      const Vector env = p.constraint_envelope(x);
      const double cost = p.total_cost(x);
      const double margin = env.maxCoeff();
      const double penalized = cost + mu * T * env.cwiseMax(0.0).sum();
      if (penalized < best_pen_value) {
        best_pen_value = penalized;
        best_pen = x;
      }
      if (margin <= opt.feasibility_tolerance && cost < best_feasible_value) {
        best_feasible_value = cost;
        best_feasible = x;
      }
      Vector g = p.total_cost_grad(x);
      if ((env.array() > 0.0).any()) {
        const Matrix jac = p.constraint_envelope_jac(x);
        for (int k = 0; k < p.num_constraints(); ++k)
          if (env(k) > 0.0) g += mu * T * jac.row(k).transpose();
      }
      const double gn = g.norm();
      if (gn == 0.0) break;
      x = set.project(x - (diam / std::sqrt(static_cast<double>(s))) * (g / gn));
    }
    x = best_pen;
    if (best_feasible.size() > 0 &&
        p.constraint_envelope(best_pen).maxCoeff() <= opt.feasibility_tolerance)
      break;
  }
  if (best_feasible.size() == 0)
    throw InfeasibilityError("penalty subgradient found no point feasible at every round");
  return finish_comparator(p, best_feasible, ComparatorMethod::subgradient);
}

}  // namespace detail

inline Comparator hindsight_comparator(const ProblemSequence& p, ComparatorMethod method,
                                       const ComparatorOptions& opt = {}) {
  switch (method) {
    case ComparatorMethod::analytic: {
      auto x = p.analytic_optimum();
      if (!x) throw CapabilityError(std::string(p.kind()) + " has no closed-form hindsight optimizer");
      return detail::finish_comparator(p, *x, ComparatorMethod::analytic);
    }
    case ComparatorMethod::grid:
      return detail::grid_comparator(p, opt);
    case ComparatorMethod::subgradient:
      return detail::subgradient_comparator(p, opt);
  }
  throw DomainError("unknown comparator method");
}

// Multiplier bound from a Slater point xs (the center of X):
//   sum_k lambda*_k <= (fbar(xs) - fbar_min) / s,   s = -max_{t,k} g_{k,t}(xs),
// where fbar is the per-round average cost. Used to size lambda_max.
inline double slater_dual_bound(const ProblemSequence& p) {
  const Vector xs = p.product_set().center();
  const double slack = -p.constraint_envelope(xs).maxCoeff();
  if (!(slack > 0.0)) throw InfeasibilityError("center of X is not strictly feasible at every round");
  const double avg = p.total_cost(xs) / p.horizon();
  const double floor = p.cost_lower_bound().value_or(avg - p.bounds().grad_f * p.bounds().diameter);
  return std::max((avg - floor) / slack, 1e-3);
}

// ---------------------------------------------------------------------------
// Oracle audits.
// ---------------------------------------------------------------------------
struct GradientReport {
  int samples = 0;
  double max_cost_error = 0.0;
  double max_constraint_error = 0.0;
  double tolerance = 0.0;

  double max_error() const { return std::max(max_cost_error, max_constraint_error); }
  bool passed() const { return max_error() <= tolerance; }
};

// Error measure: ||analytic - fd||_inf / max(1, ||analytic||_inf).
inline double relative_gradient_error(const Vector& analytic, const Vector& fd) {
  return (analytic - fd).cwiseAbs().maxCoeff() / std::max(1.0, analytic.cwiseAbs().maxCoeff());
}

inline Vector central_difference(const std::function<double(const Vector&)>& fn, const Vector& x,
                                 double step = 1e-5) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    probe(j) = x(j) + step;
    const double up = fn(probe);
    probe(j) = x(j) - step;
    const double down = fn(probe);
    probe(j) = x(j);
    g(j) = (up - down) / (2.0 * step);
  }
  return g;
}

inline GradientReport validate_gradients(const ProblemSequence& p, int samples, double tol,
                                         std::uint64_t seed = 1) {
  if (samples < 1) throw InvalidSizeError("need at least one gradient sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> round(1, p.horizon());
  GradientReport r;
  r.samples = samples;
  r.tolerance = tol;
  for (int s = 0; s < samples; ++s) {
    const int t = round(rng);
    const Vector x = sample_point(p.product_set(), rng);
    const Vector fd = central_difference([&](const Vector& z) { return p.cost(t, z); }, x);
    r.max_cost_error = std::max(r.max_cost_error, relative_gradient_error(p.cost_grad(t, x), fd));
    const Matrix jac = p.constraint_jac(t, x);
    for (int k = 0; k < p.num_constraints(); ++k) {
      const Vector fdk = central_difference([&](const Vector& z) { return p.constraint(t, z)(k); }, x);
      r.max_constraint_error =
          std::max(r.max_constraint_error, relative_gradient_error(jac.row(k).transpose(), fdk));
    }
  }
  return r;
}

struct ConvexityReport {
  int triples = 0;
  double max_cost_gap = 0.0;        // max of f(mix) - mix of f
  double max_constraint_gap = 0.0;  // same over every g_k
  bool passed() const { return max_cost_gap <= 1e-9 && max_constraint_gap <= 1e-9; }
};

inline ConvexityReport probe_convexity(const ProblemSequence& p, int triples, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> round(1, p.horizon());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ConvexityReport r;
  r.triples = triples;
  r.max_cost_gap = -std::numeric_limits<double>::infinity();
  r.max_constraint_gap = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < triples; ++s) {
    const int t = round(rng);
    const Vector x = sample_point(p.product_set(), rng);
    const Vector y = sample_point(p.product_set(), rng);
    const double th = unit(rng);
    const Vector z = th * x + (1.0 - th) * y;
    r.max_cost_gap = std::max(r.max_cost_gap, p.cost(t, z) - th * p.cost(t, x) - (1.0 - th) * p.cost(t, y));
    const Vector gap = p.constraint(t, z) - th * p.constraint(t, x) - (1.0 - th) * p.constraint(t, y);
    r.max_constraint_gap = std::max(r.max_constraint_gap, gap.maxCoeff());
  }
  return r;
}

struct BoundAudit {
  int samples = 0;
  double max_grad_f_ratio = 0.0;   // sampled ||grad f|| / G_f
  double max_jac_g_ratio = 0.0;    // sampled ||J||_F / G_g
  double max_lipschitz_ratio = 0.0;
  bool passed() const {
    return max_grad_f_ratio <= 1.0 && max_jac_g_ratio <= 1.0 && max_lipschitz_ratio <= 1.0;
  }
};

inline BoundAudit audit_bounds(const ProblemSequence& p, int samples, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> round(1, p.horizon());
  const auto& b = p.bounds();
  BoundAudit a;
  a.samples = samples;
  for (int s = 0; s < samples; ++s) {
    const int t = round(rng);
    const Vector x = sample_point(p.product_set(), rng);
    a.max_grad_f_ratio = std::max(a.max_grad_f_ratio, p.cost_grad(t, x).norm() / b.grad_f);
    const Matrix jac = p.constraint_jac(t, x);
    a.max_jac_g_ratio = std::max(a.max_jac_g_ratio, jac.norm() / b.jac_g);
    a.max_lipschitz_ratio = std::max(a.max_lipschitz_ratio, jac.rowwise().norm().maxCoeff() / b.lipschitz_g);
  }
  return a;
}

}  // namespace dopbc
