#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tsf {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Construction from caller-supplied data validates that the element count
/// matches the shape and that every element is finite. Tensors produced by
/// library kernels skip the finiteness scan; NaN produced during training is
/// caught at the loss instead.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  // Kernel/optimizer access; callers own the finiteness of what they write.
  std::span<double> mutable_data() { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  struct Unchecked {};
  Tensor(Shape shape, std::vector<double> data, Unchecked);

  Shape shape_;
  std::vector<double> data_;

  friend Tensor make_unchecked(Shape shape, std::vector<double> data);
};

// Builds a tensor without the finiteness scan. Size is still verified.
Tensor make_unchecked(Shape shape, std::vector<double> data);

void require_rank(const Tensor& t, std::size_t rank, const char* what);

// C = A * B for rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A * B^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// C = A^T * B.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Row-wise softmax with max subtraction. When causal, entry (i, j) with j > i
// receives zero probability.
Tensor softmax_rows(const Tensor& x, bool causal = false);

// Row-wise layer normalization with population variance.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

}  // namespace tsf
