#include "actbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "actbench/errors.hpp"

namespace actbench {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_to_string(shape_) + " does not hold " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("ragged rows in from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), std::move(data_));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace actbench
