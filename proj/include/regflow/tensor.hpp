#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "regflow/rng.hpp"

namespace regflow::ad {

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, column vectors
// n x 1. Rank-2 covers every operation in this codebase and keeps the
// gradient rules auditable.
class Tensor {
 public:
  Tensor() : rows_(0), cols_(0) {}
  Tensor(int rows, int cols, double fill = 0.0);
  Tensor(int rows, int cols, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor column(std::vector<double> values);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.rows_, t.cols_); }
  static Tensor randn(int rows, int cols, Rng& rng, double stddev = 1.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  const std::vector<double>& values() const { return values_; }

  double item() const;  // requires 1x1
  bool all_finite() const;
  std::string shape_str() const;  // e.g. "(3,2)"

 private:
  int rows_, cols_;
  std::vector<double> values_;
};

}  // namespace regflow::ad
