#include "catseq/nn/tensor.hpp"

#include <algorithm>

#include "catseq/error.hpp"

namespace catseq::nn {

std::size_t shape_size(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    fail(ErrorKind::kInvalidArgument, "tensor values do not match shape " + shape_string(shape_));
  }
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.size() < 2) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return shape_[0];
  return data_.size() / shape_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace catseq::nn
