#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace xgrad {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (op inputs, serialization, dataset columns).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad argument values / malformed input files / domain violations.
class ValueError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

/// Dense n-dimensional array of doubles, row-major.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape shp, std::vector<double> values) : shape(std::move(shp)), data(std::move(values)) {
    for (int64_t d : shape)
      if (d < 0) throw ShapeError("tensor dimension must be nonnegative, got " + shape_str(shape));
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                       std::to_string(data.size()) + " values");
  }

  static Tensor zeros(Shape shp) {
    auto n = shape_numel(shp);
    return Tensor(std::move(shp), std::vector<double>(static_cast<size_t>(n), 0.0));
  }
  static Tensor full(Shape shp, double v) {
    auto n = shape_numel(shp);
    return Tensor(std::move(shp), std::vector<double>(static_cast<size_t>(n), v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> values) {
    auto n = static_cast<int64_t>(values.size());
    return Tensor({n}, std::move(values));
  }
  static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t ndim() const { return static_cast<int64_t>(shape.size()); }
  int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  int64_t cols() const { return ndim() < 2 ? 1 : shape[1]; }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  double scalar_value() const {
    if (size() != 1) throw ShapeError("expected scalar tensor, got shape " + shape_str(shape));
    return data[0];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("max_abs_diff: shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace xgrad
