#include "hoigraph/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>

#include "hoigraph/errors.hpp"

namespace hoigraph {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::span<const double> values) {
  return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  // Branch-free exponent test so the loop vectorizes.
  constexpr std::uint64_t exponent = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : data_) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & exponent) == exponent);
  return bad == 0;
}

}  // namespace hoigraph
