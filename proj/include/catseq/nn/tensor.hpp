#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace catseq::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  /// Rows and columns of a rank-2 view; rank-1 tensors read as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace catseq::nn
