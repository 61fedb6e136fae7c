#include "hwrisk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hwrisk/errors.hpp"

namespace hwrisk::nn {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeMismatch("expected " + std::to_string(rows * cols) + " values, got " +
                        std::to_string(data_.size()));
  }
}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::initializer_list<double> data)
    : Tensor2D(rows, cols, std::vector<double>(data)) {}

bool Tensor2D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace hwrisk::nn
