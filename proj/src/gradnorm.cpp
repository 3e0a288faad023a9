#include "scl/gradnorm.hpp"

#include <cmath>
#include <stdexcept>

namespace scl {

Tensor normalize_mask_gradients(const Tensor& task_grad, double per_sample_sq_sum, int batch_size,
                                int feature_weight_count, float eps) {
  if (per_sample_sq_sum < 0.0) throw std::invalid_argument("per-sample squared sum must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (feature_weight_count < 1) throw std::invalid_argument("feature weight count must be >= 1");
  if (!(eps > 0.0f)) throw std::invalid_argument("eps must be positive");
  const double s = std::sqrt(per_sample_sq_sum / (static_cast<double>(batch_size) * feature_weight_count));
  const float denom = static_cast<float>(s) + eps;
  Tensor out = task_grad;
  for (float& v : out.data) v /= denom;
  return out;
}

Tensor apply_decay_after_norm(const Tensor& normalized, float lambda1) {
  Tensor out = normalized;
  apply_decay_after_norm_inplace(out, lambda1);
  return out;
}

void apply_decay_after_norm_inplace(Tensor& normalized, float lambda1) {
  if (lambda1 < 0.0f) throw std::invalid_argument("lambda1 must be >= 0");
  if (lambda1 == 0.0f) return;
  for (float& v : normalized.data) v += lambda1;
}

std::vector<double> per_sample_sq_sums_affine(const Tensor& grad_out, const Tensor& input,
                                              const Tensor& weight_variable) {
  if (grad_out.rank() != 2 || input.rank() != 2 || weight_variable.rank() != 2)
    throw std::invalid_argument("per_sample_sq_sums_affine expects matrices");
  const int64_t batch = grad_out.shape[0], out = grad_out.shape[1], in = input.shape[1];
  if (input.shape[0] != batch || weight_variable.shape[0] != out || weight_variable.shape[1] != in)
    throw std::invalid_argument("per_sample_sq_sums_affine shape mismatch: grad " + grad_out.shape_str() +
                                ", input " + input.shape_str() + ", weight " + weight_variable.shape_str());

  // Per-sample product for weight (o,i) at sample b is
  //   B * G[b,o] * X[b,i] * w~[o,i],
  // so the squared sum factorizes into G^2 against X^2 (w~^2)^T.
  Tensor xsq({batch, in});
  for (size_t i = 0; i < xsq.data.size(); ++i) xsq.data[i] = input.data[i] * input.data[i];
  Tensor wsq_t({in, out});
  for (int64_t o = 0; o < out; ++o)
    for (int64_t i = 0; i < in; ++i) {
      const float w = weight_variable.data[static_cast<size_t>(o * in + i)];
      wsq_t.data[static_cast<size_t>(i * out + o)] = w * w;
    }
  const Tensor r = matmul(xsq, wsq_t);  // B x out

  const double b2 = static_cast<double>(batch) * static_cast<double>(batch);
  std::vector<double> sums(static_cast<size_t>(out), 0.0);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t o = 0; o < out; ++o) {
      const double g = grad_out.data[static_cast<size_t>(b * out + o)];
      sums[static_cast<size_t>(o)] += b2 * g * g * r.data[static_cast<size_t>(b * out + o)];
    }
  return sums;
}

void shift_per_sample_sq_sums(std::vector<double>& sums, const Tensor& task_numerator,
                              const Tensor& per_weight_shift, int batch_size, int64_t feature_size) {
  if (!task_numerator.same_shape(per_weight_shift))
    throw std::invalid_argument("shift_per_sample_sq_sums shape mismatch");
  const double b = batch_size;
  for (size_t f = 0; f < sums.size(); ++f) {
    double extra = 0.0;
    const size_t base = f * static_cast<size_t>(feature_size);
    for (int64_t i = 0; i < feature_size; ++i) {
      const double c = per_weight_shift.data[base + static_cast<size_t>(i)];
      const double t = task_numerator.data[base + static_cast<size_t>(i)];
      extra += 2.0 * c * b * t + b * c * c;
    }
    sums[f] += extra;
  }
}

std::vector<double> per_sample_sq_sums_conv(const Tensor& grad_out, const Tensor& input,
                                            const Tensor& weight_variable, int stride, int padding) {
  const int64_t batch = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
  const int64_t f = weight_variable.shape[0], kh = weight_variable.shape[2], kw = weight_variable.shape[3];
  const int64_t oh = grad_out.shape[2], ow = grad_out.shape[3];
  std::vector<double> sums(static_cast<size_t>(f), 0.0);
  const double b2 = static_cast<double>(batch) * static_cast<double>(batch);
  Tensor pg({c, kh, kw});
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t of = 0; of < f; ++of) {
      for (float& v : pg.data) v = 0.0f;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          const float g = grad_out.data[static_cast<size_t>(((n * f + of) * oh + y) * ow + x)];
          for (int64_t ic = 0; ic < c; ++ic)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = y * stride + ky - padding;
                const int64_t ix = x * stride + kx - padding;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                pg.data[static_cast<size_t>((ic * kh + ky) * kw + kx)] +=
                    g * input.data[static_cast<size_t>(((n * c + ic) * h + iy) * w + ix)];
              }
        }
      for (size_t i = 0; i < pg.data.size(); ++i) {
        const double p = static_cast<double>(pg.data[i]) *
                         weight_variable.data[static_cast<size_t>(of * c * kh * kw) + i];
        sums[static_cast<size_t>(of)] += b2 * p * p;
      }
    }
  return sums;
}

}  // namespace scl
