#include "scl/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace scl {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

static void check_shape(const std::vector<int64_t>& shape) {
  for (int64_t d : shape) {
    if (d < 1) throw std::invalid_argument("tensor shape entries must be >= 1, got " + shape_to_string(shape));
  }
}

Tensor::Tensor(std::vector<int64_t> shape_) : shape(std::move(shape_)) {
  check_shape(shape);
  data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
}

Tensor::Tensor(std::vector<int64_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  check_shape(shape);
  if (static_cast<int64_t>(data.size()) != shape_numel(shape))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_to_string(shape));
}

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = value;
  return t;
}

int64_t Tensor::numel() const { return shape_numel(shape); }

std::string Tensor::shape_str() const { return shape_to_string(shape); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul expects matrices, got " + a.shape_str() + " and " + b.shape_str());
  if (a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  const float* pa = a.data.data();
  const float* pb = b.data.data();
  float* pc = c.data.data();
  for (int64_t i = 0; i < m; ++i) {
    float* crow = pc + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const float aik = pa[i * k + kk];
      const float* brow = pb + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose expects a matrix, got " + a.shape_str());
  const int64_t m = a.shape[0], n = a.shape[1];
  Tensor t({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) t.data[static_cast<size_t>(j * m + i)] = a.data[static_cast<size_t>(i * n + j)];
  return t;
}

static void check_conv_args(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw std::invalid_argument("conv2d expects 4-d input and kernel, got " + input.shape_str() + " and " +
                                kernel.shape_str());
  if (input.shape[1] != kernel.shape[1])
    throw std::invalid_argument("conv2d channel mismatch: input " + input.shape_str() + " vs kernel " +
                                kernel.shape_str());
  if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d padding must be >= 0");
  if (kernel.shape[2] > input.shape[2] + 2 * padding || kernel.shape[3] > input.shape[3] + 2 * padding)
    throw std::invalid_argument("conv2d kernel " + kernel.shape_str() + " larger than padded input " +
                                input.shape_str());
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  check_conv_args(input, kernel, stride, padding);
  const int64_t n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
  const int64_t f = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
  const int64_t oh = (h + 2 * padding - kh) / stride + 1;
  const int64_t ow = (w + 2 * padding - kw) / stride + 1;
  Tensor out({n, f, oh, ow});
  for (int64_t in = 0; in < n; ++in)
    for (int64_t of = 0; of < f; ++of)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          float acc = 0.0f;
          for (int64_t ic = 0; ic < c; ++ic)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = y * stride + ky - padding;
                const int64_t ix = x * stride + kx - padding;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += input.data[static_cast<size_t>(((in * c + ic) * h + iy) * w + ix)] *
                       kernel.data[static_cast<size_t>(((of * c + ic) * kh + ky) * kw + kx)];
              }
          out.data[static_cast<size_t>(((in * f + of) * oh + y) * ow + x)] = acc;
        }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, int stride, int padding,
                     const Tensor& grad_out, Tensor& grad_input, Tensor& grad_kernel) {
  check_conv_args(input, kernel, stride, padding);
  const int64_t n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
  const int64_t f = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
  const int64_t oh = grad_out.shape[2], ow = grad_out.shape[3];
  grad_input = Tensor::zeros(input.shape);
  grad_kernel = Tensor::zeros(kernel.shape);
  for (int64_t in = 0; in < n; ++in)
    for (int64_t of = 0; of < f; ++of)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          const float g = grad_out.data[static_cast<size_t>(((in * f + of) * oh + y) * ow + x)];
          for (int64_t ic = 0; ic < c; ++ic)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = y * stride + ky - padding;
                const int64_t ix = x * stride + kx - padding;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                const size_t ii = static_cast<size_t>(((in * c + ic) * h + iy) * w + ix);
                const size_t ki = static_cast<size_t>(((of * c + ic) * kh + ky) * kw + kx);
                grad_input.data[ii] += g * kernel.data[ki];
                grad_kernel.data[ki] += g * input.data[ii];
              }
        }
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("hadamard shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void scale_inplace(Tensor& a, float s) {
  for (float& v : a.data) v *= s;
}

}  // namespace scl
