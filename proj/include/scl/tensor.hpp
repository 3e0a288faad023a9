#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scl {

// Dense row-major float32 tensor. Values are kept in float throughout; the
// summation order of every kernel is fixed so repeated runs are bit-identical.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape_);
  Tensor(std::vector<int64_t> shape_, std::vector<float> data_);

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, float value);

  int64_t numel() const;
  int64_t dim(size_t i) const { return shape[i]; }
  size_t rank() const { return shape.size(); }

  float& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  float at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

// C = A(MxK) * B(KxN). Each output element accumulates over k in increasing
// order, matching the naive triple loop exactly.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Cross-correlation. input NxCxHxW, kernel FxCxKHxKW -> NxFxH'xW' with
// H' = (H + 2*padding - KH)/stride + 1. Summation order (c, kh, kw) per
// output element.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
void conv2d_backward(const Tensor& input, const Tensor& kernel, int stride, int padding,
                     const Tensor& grad_out, Tensor& grad_input, Tensor& grad_kernel);

// Elementwise helpers used across modules.
Tensor hadamard(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, float s);

}  // namespace scl
