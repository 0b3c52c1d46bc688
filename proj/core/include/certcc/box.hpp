#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace certcc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Closed real interval [lo, hi]. Either bound may be infinite.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  static Interval point(double v) { return {v, v}; }

  double width() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
  bool valid() const { return lo <= hi; }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains(const Interval& other) const {
    return lo <= other.lo && other.hi <= hi;
  }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Axis-aligned box over R^m stored as (center, deviation).
///
/// Dimension i concretizes to [center_i - deviation_i, center_i + deviation_i].
/// Deviations are non-negative; construction rejects anything else.
class Box {
 public:
  Box(Vector center, Vector deviation);

  /// Smallest box containing the given per-dimension intervals.
  static Box from_intervals(std::span<const Interval> intervals);
  static Box point(const Vector& x);

  std::size_t dim() const { return static_cast<std::size_t>(center_.size()); }
  const Vector& center() const { return center_; }
  const Vector& deviation() const { return deviation_; }

  Vector lower() const { return center_ - deviation_; }
  Vector upper() const { return center_ + deviation_; }
  Interval interval(std::size_t i) const;
  std::vector<Interval> concretize() const;

  bool contains(const Vector& x, double tol = 0.0) const;
  /// True if every dimension of `inner` lies inside this box (with slack `tol`).
  bool contains(const Box& inner, double tol = 0.0) const;

 private:
  Vector center_;
  Vector deviation_;
};

/// x -> M x + bias lifted to boxes: (M c + bias, |M| e).
Box affine(const Box& b, const Matrix& m, const Vector& bias);

/// Replaces dimension i with the sum of dimensions j and k.
Box add_elements(const Box& b, std::size_t i, std::size_t j, std::size_t k);

Box relu(const Box& b);

/// Lifts a non-decreasing scalar function by evaluating it at the endpoints.
/// Exact per dimension when f is strictly increasing.
Box monotone_elementwise(const Box& b, const std::function<double(double)>& f);

/// Partitions dimension `dim` into n equal pieces; other dimensions untouched.
std::vector<Box> split(const Box& b, std::size_t dim, std::size_t n);

/// Per-dimension [min lo, max hi] over a non-empty set of equal-dimension boxes.
Box hull(std::span<const Box> boxes);

}  // namespace certcc
