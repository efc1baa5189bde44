#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stochpool/error.hpp"
#include "stochpool/rng.hpp"

namespace stochpool {

/// NCHW extents.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t spatial() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Dense rank-4 array of doubles, row-major with width fastest. Each (n, c)
/// plane is a contiguous run of h*w values, i.e. the flattened (N, C, HW) view.
class Tensor4 {
 public:
  Tensor4() = default;

  explicit Tensor4(Shape shape, double fill = 0.0) : shape_(shape) {
    detail::require(shape.valid(), ErrorKind::kInvalidShape,
                    "all dimensions must be >= 1, got " + shape.str());
    data_.assign(shape.size(), fill);
  }

  Tensor4(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    detail::require(shape.valid(), ErrorKind::kInvalidShape,
                    "all dimensions must be >= 1, got " + shape.str());
    detail::require(data_.size() == shape.size(), ErrorKind::kInvalidShape,
                    "data length " + std::to_string(data_.size()) + " does not match " + shape.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Spatial plane of sample n, channel c (length h*w).
  std::span<double> plane(int n, int c) {
    return std::span<double>(data_).subspan(offset(n, c, 0, 0), shape_.spatial());
  }
  std::span<const double> plane(int n, int c) const {
    return std::span<const double>(data_).subspan(offset(n, c, 0, 0), shape_.spatial());
  }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

/// I.i.d. standard normal tensor; draws are taken in storage order from `rng`.
inline Tensor4 sample_gaussian(Shape shape, RngStream& rng) {
  Tensor4 out(shape);
  rng.fill_normal(out.data());
  return out;
}

namespace detail {

// Neumaier's variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

inline double mean(std::span<const double> values) {
  detail::require(!values.empty(), ErrorKind::kDegenerateInput, "mean of an empty range");
  detail::CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value() / static_cast<double>(values.size());
}

inline double second_moment(std::span<const double> values) {
  detail::require(!values.empty(), ErrorKind::kDegenerateInput, "second moment of an empty range");
  detail::CompensatedSum acc;
  for (double v : values) acc.add(v * v);
  return acc.value() / static_cast<double>(values.size());
}

/// Population variance, E[x^2] - E[x]^2.
inline double variance(std::span<const double> values) {
  detail::require(values.size() >= 2, ErrorKind::kDegenerateInput,
                  "variance needs at least two entries");
  const double m = mean(values);
  return second_moment(values) - m * m;
}

inline double mean(const Tensor4& t) { return mean(t.data()); }
inline double second_moment(const Tensor4& t) { return second_moment(t.data()); }
inline double variance(const Tensor4& t) { return variance(t.data()); }

inline bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace stochpool
