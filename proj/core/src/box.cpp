#include "certcc/box.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace certcc {

Box::Box(Vector center, Vector deviation)
    : center_(std::move(center)), deviation_(std::move(deviation)) {
  if (center_.size() == 0) throw std::invalid_argument("zero-dimension box");
  if (center_.size() != deviation_.size())
    throw std::invalid_argument("box center/deviation size mismatch");
  for (Eigen::Index i = 0; i < deviation_.size(); ++i) {
    if (!(deviation_[i] >= 0.0))
      throw std::invalid_argument("box deviation must be non-negative (dim " +
                                  std::to_string(i) + ")");
  }
}

Box Box::from_intervals(std::span<const Interval> intervals) {
  if (intervals.empty()) throw std::invalid_argument("zero-dimension box");
  const auto m = static_cast<Eigen::Index>(intervals.size());
  Vector c(m), e(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Interval& iv = intervals[static_cast<std::size_t>(i)];
    if (!iv.valid()) throw std::invalid_argument("invalid interval: lo > hi");
    c[i] = 0.5 * (iv.lo + iv.hi);
    e[i] = 0.5 * (iv.hi - iv.lo);
  }
  return Box(std::move(c), std::move(e));
}

Box Box::point(const Vector& x) { return Box(x, Vector::Zero(x.size())); }

Interval Box::interval(std::size_t i) const {
  const auto k = static_cast<Eigen::Index>(i);
  return {center_[k] - deviation_[k], center_[k] + deviation_[k]};
}

std::vector<Interval> Box::concretize() const {
  std::vector<Interval> out;
  out.reserve(dim());
  for (std::size_t i = 0; i < dim(); ++i) out.push_back(interval(i));
  return out;
}

bool Box::contains(const Vector& x, double tol) const {
  if (x.size() != center_.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < center_[i] - deviation_[i] - tol) return false;
    if (x[i] > center_[i] + deviation_[i] + tol) return false;
  }
  return true;
}

bool Box::contains(const Box& inner, double tol) const {
  if (inner.dim() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i) {
    const Interval o = interval(i);
    const Interval n = inner.interval(i);
    if (n.lo < o.lo - tol || n.hi > o.hi + tol) return false;
  }
  return true;
}

Box affine(const Box& b, const Matrix& m, const Vector& bias) {
  if (m.cols() != static_cast<Eigen::Index>(b.dim()))
    throw std::invalid_argument("affine: matrix columns != box dimension");
  if (bias.size() != m.rows())
    throw std::invalid_argument("affine: bias size != matrix rows");
  Vector c = m * b.center() + bias;
  Vector e = m.cwiseAbs() * b.deviation();
  return Box(std::move(c), std::move(e));
}

Box add_elements(const Box& b, std::size_t i, std::size_t j, std::size_t k) {
  const std::size_t m = b.dim();
  if (i >= m || j >= m || k >= m)
    throw std::out_of_range("add_elements: index out of range");
  // Selection matrix: identity except row i, which picks j and k.
  Matrix sel = Matrix::Identity(static_cast<Eigen::Index>(m),
                                static_cast<Eigen::Index>(m));
  const auto ii = static_cast<Eigen::Index>(i);
  sel.row(ii).setZero();
  sel(ii, static_cast<Eigen::Index>(j)) += 1.0;
  sel(ii, static_cast<Eigen::Index>(k)) += 1.0;
  // sel is non-negative, so |sel| == sel.
  return Box(sel * b.center(), sel * b.deviation());
}

Box relu(const Box& b) {
  const Vector up = (b.center() + b.deviation()).cwiseMax(0.0);
  const Vector down = (b.center() - b.deviation()).cwiseMax(0.0);
  return Box(0.5 * (up + down), 0.5 * (up - down));
}

Box monotone_elementwise(const Box& b, const std::function<double(double)>& f) {
  const auto m = static_cast<Eigen::Index>(b.dim());
  Vector c(m), e(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lo = f(b.center()[i] - b.deviation()[i]);
    const double hi = f(b.center()[i] + b.deviation()[i]);
    c[i] = 0.5 * (lo + hi);
    e[i] = std::max(0.0, 0.5 * (hi - lo));
  }
  return Box(std::move(c), std::move(e));
}

std::vector<Box> split(const Box& b, std::size_t dim, std::size_t n) {
  if (n == 0) throw std::invalid_argument("split: n must be >= 1");
  if (dim >= b.dim()) throw std::out_of_range("split: dimension out of range");
  if (n == 1) return {b};

  const Interval whole = b.interval(dim);
  std::vector<Box> parts;
  parts.reserve(n);
  const double step = whole.width() / static_cast<double>(n);
  const auto d = static_cast<Eigen::Index>(dim);
  for (std::size_t p = 0; p < n; ++p) {
    const double lo = whole.lo + step * static_cast<double>(p);
    // Pin the last upper edge so the pieces cover the original exactly.
    const double hi = (p + 1 == n) ? whole.hi : whole.lo + step * static_cast<double>(p + 1);
    Vector c = b.center();
    Vector e = b.deviation();
    c[d] = 0.5 * (lo + hi);
    e[d] = std::max(0.0, 0.5 * (hi - lo));
    parts.emplace_back(std::move(c), std::move(e));
  }
  return parts;
}

Box hull(std::span<const Box> boxes) {
  if (boxes.empty()) throw std::invalid_argument("hull of empty set");
  Vector lo = boxes.front().lower();
  Vector hi = boxes.front().upper();
  for (const Box& b : boxes.subspan(1)) {
    if (b.dim() != boxes.front().dim())
      throw std::invalid_argument("hull: dimension mismatch");
    lo = lo.cwiseMin(b.lower());
    hi = hi.cwiseMax(b.upper());
  }
  std::vector<Interval> ivs(static_cast<std::size_t>(lo.size()));
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    ivs[static_cast<std::size_t>(i)] = {lo[i], hi[i]};
  return Box::from_intervals(ivs);
}

}  // namespace certcc
