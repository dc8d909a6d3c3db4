#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dopbc/errors.hpp"
#include "dopbc/types.hpp"

namespace dopbc {

enum class TopologyKind { complete, ring, path, star, random_geometric };
enum class MixingScheme { lazy_metropolis, uniform_average };

inline std::string_view to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::complete: return "complete";
    case TopologyKind::ring: return "ring";
    case TopologyKind::path: return "path";
    case TopologyKind::star: return "star";
    case TopologyKind::random_geometric: return "random-geometric";
  }
  return "?";
}

inline std::optional<TopologyKind> parse_topology(std::string_view s) {
  for (auto k : {TopologyKind::complete, TopologyKind::ring, TopologyKind::path,
                 TopologyKind::star, TopologyKind::random_geometric}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline std::string_view to_string(MixingScheme s) {
  return s == MixingScheme::lazy_metropolis ? "lazy-metropolis" : "uniform-average";
}

inline std::optional<MixingScheme> parse_mixing(std::string_view s) {
  if (s == "lazy-metropolis") return MixingScheme::lazy_metropolis;
  if (s == "uniform-average") return MixingScheme::uniform_average;
  return std::nullopt;
}

struct TopologySpec {
  TopologyKind kind = TopologyKind::ring;
  double radius = 0.5;      // random-geometric only
  std::uint64_t seed = 0;   // random-geometric only

  bool operator==(const TopologySpec&) const = default;
};

// Undirected simple graph over agents 0..n-1. Edges are stored as (i, j)
// with i < j, sorted.
class Graph {
 public:
  Graph(int n, std::vector<std::pair<int, int>> edges) : n_(n), adj_(n > 0 ? n : 0) {
    if (n < 1) throw InvalidSizeError("graph needs at least one agent");
    for (auto& [a, b] : edges) {
      if (a == b) throw ShapeError("self-loop at agent " + std::to_string(a));
      if (a < 0 || b < 0 || a >= n || b >= n) throw IndexError("edge endpoint out of range");
      if (a > b) std::swap(a, b);
    }
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
      throw ShapeError("duplicate edge");
    edges_ = std::move(edges);
    for (auto [a, b] : edges_) {
      adj_[a].push_back(b);
      adj_[b].push_back(a);
    }
    for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
  }

  int size() const noexcept { return n_; }
  const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
  const std::vector<int>& neighbors(int i) const { return adj_.at(i); }
  int degree(int i) const { return static_cast<int>(adj_.at(i).size()); }

  bool has_edge(int a, int b) const {
    const auto& nb = adj_.at(a);
    return std::binary_search(nb.begin(), nb.end(), b);
  }

  bool is_complete() const {
    return edges_.size() == static_cast<std::size_t>(n_) * (n_ - 1) / 2;
  }

  bool is_connected() const {
    std::vector<char> seen(n_, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int u : adj_[v]) {
        if (!seen[u]) {
          seen[u] = 1;
          ++count;
          stack.push_back(u);
        }
      }
    }
    return count == n_;
  }

  // Radius actually used when the graph came from a random-geometric build.
  std::optional<double> final_radius;

 private:
  int n_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> adj_;
};

namespace detail {

inline Graph random_geometric_graph(int n, double radius, std::uint64_t seed) {
  if (!(radius > 0.0) || radius > std::sqrt(2.0))
    throw DomainError("random-geometric radius must lie in (0, sqrt(2)]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<double, double>> pts(n);
  for (auto& p : pts) p = {unit(rng), unit(rng)};

  constexpr int kMaxRetries = 50;
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second) <= radius)
          edges.emplace_back(i, j);
    Graph g(n, std::move(edges));
    if (g.is_connected()) {
      g.final_radius = radius;
      return g;
    }
    radius *= 1.2;
  }
  throw ConnectivityError("random-geometric graph still disconnected after 50 radius increases");
}

}  // namespace detail

inline Graph build_graph(const TopologySpec& spec, int n) {
  if (n < 1) throw InvalidSizeError("graph needs at least one agent, got " + std::to_string(n));
  std::vector<std::pair<int, int>> edges;
  switch (spec.kind) {
    case TopologyKind::complete:
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      break;
    case TopologyKind::ring:
      for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      if (n >= 3) edges.emplace_back(0, n - 1);
      break;
    case TopologyKind::path:
      for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      break;
    case TopologyKind::star:
      for (int i = 1; i < n; ++i) edges.emplace_back(0, i);
      break;
    case TopologyKind::random_geometric:
      return detail::random_geometric_graph(n, spec.radius, spec.seed);
  }
  return Graph(n, std::move(edges));
}

inline Graph build_graph(TopologyKind kind, int n) { return build_graph(TopologySpec{kind}, n); }

// Second-largest eigenvalue by dense symmetric eigendecomposition.
inline double spectral_sigma_dense(const Matrix& w) {
  const auto n = w.rows();
  if (n < 2) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(w, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(n - 2);
}

// Operator norm of w - (1/n) 11^T by power iteration on the deflated matrix.
// Stops when the eigen-residual drops below tol.
inline double spectral_sigma_power(const Matrix& w, double tol = 1e-10, int max_iter = 100000) {
  const auto n = w.rows();
  if (n < 2) return 0.0;
  const Matrix b = w - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  // Fixed start vector, orthogonal to the ones direction.
  Vector v(n);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  v.array() -= v.mean();
  if (v.norm() == 0.0) return 0.0;
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector bv = b * v;
    lambda = v.dot(bv);
    const double residual = (bv - lambda * v).norm();
    const double nrm = bv.norm();
    if (residual <= tol || nrm == 0.0) break;
    v = bv / nrm;
  }
  return std::abs(lambda);
}

inline void require_symmetric(const Matrix& w) {
  if (w.rows() != w.cols()) throw ShapeError("mixing matrix must be square");
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ShapeError("mixing matrix must be symmetric");
}

// Dense path up to 512 agents, power iteration above.
inline double spectral_sigma(const Matrix& w) {
  require_symmetric(w);
  return w.rows() <= 512 ? spectral_sigma_dense(w) : spectral_sigma_power(w);
}

class MixingMatrix {
 public:
  // Takes ownership of an already-validated weight matrix.
  explicit MixingMatrix(Matrix w) : w_(std::move(w)) {
    require_symmetric(w_);
    sigma_ = spectral_sigma(w_);
  }

  const Matrix& weights() const noexcept { return w_; }
  double sigma() const noexcept { return sigma_; }
  int size() const noexcept { return static_cast<int>(w_.rows()); }

  Vector eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(w_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().reverse();
  }

 private:
  Matrix w_;
  double sigma_ = 0.0;
};

inline MixingMatrix build_mixing(const Graph& g, MixingScheme scheme) {
  if (!g.is_connected()) throw ConnectivityError("mixing requires a connected graph");
  const int n = g.size();
  Matrix w = Matrix::Zero(n, n);
  switch (scheme) {
    case MixingScheme::uniform_average:
      if (!g.is_complete())
        throw CompatibilityError("uniform-average weights need a complete graph");
      w.setConstant(1.0 / n);
      break;
    case MixingScheme::lazy_metropolis: {
      Matrix m = Matrix::Zero(n, n);
      for (auto [a, b] : g.edges()) {
        const double wij = 1.0 / (1.0 + std::max(g.degree(a), g.degree(b)));
        m(a, b) = wij;
        m(b, a) = wij;
      }
      for (int i = 0; i < n; ++i) m(i, i) = 1.0 - m.row(i).sum();
      w = 0.5 * (Matrix::Identity(n, n) + m);
      break;
    }
  }
  return MixingMatrix(std::move(w));
}

struct MixingReport {
  double max_row_deviation = 0.0;
  double max_col_deviation = 0.0;
  double min_entry = 0.0;
  double min_eigenvalue = 0.0;
  double sigma = 0.0;
  bool compatible = true;

  bool ok(bool connected) const {
    return max_row_deviation <= 1e-12 && max_col_deviation <= 1e-12 && min_entry >= 0.0 &&
           min_eigenvalue >= -1e-10 && compatible && (connected ? sigma < 1.0 : true);
  }
};

inline MixingReport inspect_mixing(const MixingMatrix& mix, const Graph& g) {
  const Matrix& w = mix.weights();
  MixingReport r;
  r.max_row_deviation = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  r.max_col_deviation = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
  r.min_entry = w.minCoeff();
  r.min_eigenvalue = mix.eigenvalues().minCoeff();
  r.sigma = mix.sigma();
  for (int i = 0; i < g.size(); ++i)
    for (int j = 0; j < g.size(); ++j)
      if (i != j && w(i, j) != 0.0 && !g.has_edge(i, j)) r.compatible = false;
  return r;
}

// Row-major CSV, 17 significant digits.
inline void write_matrix_csv(std::ostream& os, const Matrix& w) {
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (j) os << ',';
      os << format_real(w(i, j));
    }
    os << '\n';
  }
}

}  // namespace dopbc
