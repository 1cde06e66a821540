#include "regflow/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace regflow::ad {

Tensor::Tensor(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), values_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative extent");
}

Tensor::Tensor(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("Tensor: value count " + std::to_string(values_.size()) +
                                " does not match shape " + shape_str());
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, std::vector<double>{v}); }

Tensor Tensor::column(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::randn(int rows, int cols, Rng& rng, double stddev) {
  Tensor t(rows, cols);
  for (auto& v : t.values_) v = stddev * rng.normal();
  return t;
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1)
    throw std::invalid_argument("Tensor::item: shape " + shape_str() + " is not scalar");
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  return "(" + std::to_string(rows_) + "," + std::to_string(cols_) + ")";
}

}  // namespace regflow::ad
