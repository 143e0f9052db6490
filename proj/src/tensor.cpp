#include "edr/tensor.hpp"

#include <cmath>
#include <sstream>

#include "edr/errors.hpp"

namespace edr {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
  if (shape.empty()) {
    throw ShapeError("tensor shape must have at least one extent");
  }
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) {
      throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
    }
    n *= e;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_product(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_to_string(shape_) + " does not match data length " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape_); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace edr
