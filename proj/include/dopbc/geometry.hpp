#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dopbc/errors.hpp"
#include "dopbc/types.hpp"

namespace dopbc {

struct Box {
  Vector lo;
  Vector hi;
};

struct Ball {
  Vector center;
  double radius = 0.0;
};

// Compact convex set: an axis-aligned box or a Euclidean ball.
class ConvexSet {
 public:
  ConvexSet(Box b) : shape_(std::move(b)) {
    const auto& box = std::get<Box>(shape_);
    if (box.lo.size() != box.hi.size()) throw ShapeError("box bounds differ in dimension");
    if ((box.lo.array() > box.hi.array()).any()) throw DomainError("box needs lo <= hi");
    if (!box.lo.allFinite() || !box.hi.allFinite()) throw DomainError("box bounds must be finite");
  }

  ConvexSet(Ball b) : shape_(std::move(b)) {
    const auto& ball = std::get<Ball>(shape_);
    if (!(ball.radius >= 0.0) || !std::isfinite(ball.radius))
      throw DomainError("ball radius must be finite and nonnegative");
  }

  static ConvexSet box(Vector lo, Vector hi) { return ConvexSet(Box{std::move(lo), std::move(hi)}); }
  static ConvexSet cube(int dim, double lo, double hi) {
    return box(Vector::Constant(dim, lo), Vector::Constant(dim, hi));
  }
  static ConvexSet ball(Vector center, double radius) {
    return ConvexSet(Ball{std::move(center), radius});
  }

  bool is_box() const noexcept { return std::holds_alternative<Box>(shape_); }
  const Box& as_box() const { return std::get<Box>(shape_); }
  const Ball& as_ball() const { return std::get<Ball>(shape_); }

  int dim() const {
    return static_cast<int>(is_box() ? as_box().lo.size() : as_ball().center.size());
  }

  Vector project(const Vector& p) const {
    if (p.size() != dim())
      throw ShapeError("projection input has dimension " + std::to_string(p.size()) +
                       ", set has " + std::to_string(dim()));
    if (is_box()) {
      const auto& b = as_box();
      return p.cwiseMax(b.lo).cwiseMin(b.hi);
    }
    const auto& b = as_ball();
    Vector off = p - b.center;
    const double r = off.norm();
    if (r <= b.radius) return p;
    return b.center + off * (b.radius / r);
  }

  bool contains(const Vector& p, double tol = 1e-12) const {
    if (p.size() != dim()) return false;
    if (is_box()) {
      const auto& b = as_box();
      return ((p - b.lo).array() >= -tol).all() && ((b.hi - p).array() >= -tol).all();
    }
    const auto& b = as_ball();
    return (p - b.center).norm() <= b.radius + tol;
  }

  double diameter() const {
    if (is_box()) return (as_box().hi - as_box().lo).norm();
    return 2.0 * as_ball().radius;
  }

  // Center of the largest inscribed ball (exact for boxes and balls).
  Vector center() const {
    if (is_box()) return 0.5 * (as_box().lo + as_box().hi);
    return as_ball().center;
  }

  // max_{x in set} ||x||
  double max_norm() const {
    if (is_box()) return as_box().lo.cwiseAbs().cwiseMax(as_box().hi.cwiseAbs()).norm();
    return as_ball().center.norm() + as_ball().radius;
  }

  // Support function max_{x in set} <v, x>.
  double support(const Vector& v) const {
    if (is_box()) {
      const auto& b = as_box();
      return v.cwiseProduct(b.lo).cwiseMax(v.cwiseProduct(b.hi)).sum();
    }
    return v.dot(as_ball().center) + as_ball().radius * v.norm();
  }

  // Smallest enclosing axis-aligned box.
  Box bounding_box() const {
    if (is_box()) return as_box();
    const auto& b = as_ball();
    return Box{b.center.array() - b.radius, b.center.array() + b.radius};
  }

 private:
  std::variant<Box, Ball> shape_;
};

// Cartesian product of per-agent sets; block i spans [offset(i), offset(i) + dim_i).
class ProductSet {
 public:
  explicit ProductSet(std::vector<ConvexSet> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw InvalidSizeError("product set needs at least one block");
    offsets_.reserve(blocks_.size() + 1);
    offsets_.push_back(0);
    for (const auto& b : blocks_) offsets_.push_back(offsets_.back() + b.dim());
  }

  int num_blocks() const noexcept { return static_cast<int>(blocks_.size()); }
  int dim() const noexcept { return offsets_.back(); }
  int offset(int i) const { return offsets_.at(i); }
  int block_dim(int i) const { return block(i).dim(); }

  const ConvexSet& block(int i) const {
    if (i < 0 || i >= num_blocks())
      throw IndexError("agent index " + std::to_string(i) + " out of range");
    return blocks_[i];
  }

  double diameter() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.diameter() * b.diameter();
    return std::sqrt(s);
  }

  double max_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.max_norm() * b.max_norm();
    return std::sqrt(s);
  }

  Vector center() const {
    Vector c(dim());
    for (int i = 0; i < num_blocks(); ++i) c.segment(offset(i), block_dim(i)) = blocks_[i].center();
    return c;
  }

  double support(const Vector& v) const {
    check_joint(v);
    double s = 0.0;
    for (int i = 0; i < num_blocks(); ++i) s += blocks_[i].support(v.segment(offset(i), block_dim(i)));
    return s;
  }

  Box bounding_box() const {
    Box out{Vector(dim()), Vector(dim())};
    for (int i = 0; i < num_blocks(); ++i) {
      auto b = blocks_[i].bounding_box();
      out.lo.segment(offset(i), block_dim(i)) = b.lo;
      out.hi.segment(offset(i), block_dim(i)) = b.hi;
    }
    return out;
  }

  Vector project(const Vector& joint) const {
    check_joint(joint);
    Vector out(dim());
    for (int i = 0; i < num_blocks(); ++i)
      out.segment(offset(i), block_dim(i)) = blocks_[i].project(joint.segment(offset(i), block_dim(i)));
    return out;
  }

  bool contains(const Vector& joint, double tol = 1e-12) const {
    if (joint.size() != dim()) return false;
    for (int i = 0; i < num_blocks(); ++i)
      if (!blocks_[i].contains(joint.segment(offset(i), block_dim(i)), tol)) return false;
    return true;
  }

  void check_joint(const Vector& joint) const {
    if (joint.size() != dim())
      throw ShapeError("joint vector has dimension " + std::to_string(joint.size()) +
                       ", expected " + std::to_string(dim()));
  }

 private:
  std::vector<ConvexSet> blocks_;
  std::vector<int> offsets_;
};

inline Vector project(const ConvexSet& s, const Vector& p) { return s.project(p); }

// Uniform sample from a block (rejection from the bounding box for balls).
template <class Urbg>
Vector sample_point(const ConvexSet& s, Urbg& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Box bb = s.bounding_box();
  Vector x(s.dim());
  for (int tries = 0; tries < 1000; ++tries) {
    for (int j = 0; j < s.dim(); ++j) x(j) = bb.lo(j) + unit(rng) * (bb.hi(j) - bb.lo(j));
    if (s.contains(x)) return x;
  }
  return s.project(x);
}

template <class Urbg>
Vector sample_point(const ProductSet& s, Urbg& rng) {
  Vector x(s.dim());
  for (int i = 0; i < s.num_blocks(); ++i) x.segment(s.offset(i), s.block_dim(i)) = sample_point(s.block(i), rng);
  return x;
}

// Block i of a joint vector, projected onto X_i.
inline Vector project_block(const ProductSet& s, int i, const Vector& joint) {
  s.check_joint(joint);
  const auto& blk = s.block(i);
  return blk.project(joint.segment(s.offset(i), blk.dim()));
}

// Clamp onto the dual box [0, lambda_max]^m.
inline Vector project_dual(double lambda_max, const Vector& v) {
  if (!(lambda_max > 0.0)) throw DomainError("lambda_max must be positive");
  return v.cwiseMax(0.0).cwiseMin(lambda_max);
}

}  // namespace dopbc
