#pragma once

#include "scl/tensor.hpp"

namespace scl {

// Per-feature normalization of mask gradients to unit RMS over the
// mini-batch. The scale is computed from per-sample gradient products; the
// connectivity-decay gradient is added afterwards and never enters the
// normalization.

// task_grad: dL/dw (.) w~ for one feature group, summed over the batch.
// per_sample_sq_sum: sum over batch and feature weights of the squared
// per-sample products. Returns task_grad / (s + eps) with
// s = sqrt(per_sample_sq_sum / (batch_size * feature_weight_count)).
Tensor normalize_mask_gradients(const Tensor& task_grad, double per_sample_sq_sum, int batch_size,
                                int feature_weight_count, float eps);

// Adds the constant decay gradient lambda1 to every element.
Tensor apply_decay_after_norm(const Tensor& normalized, float lambda1);
void apply_decay_after_norm_inplace(Tensor& normalized, float lambda1);

// Per-sample squared sums for an affine layer, one entry per output
// feature. grad_out is dL/dy (B x out) from the batch backward, input is
// the layer input (B x in), weight_variable is w~ (out x in). Per-sample
// gradients are the pre-averaging ones, i.e. batch_size times the
// per-sample contribution to the batch gradient.
std::vector<double> per_sample_sq_sums_affine(const Tensor& grad_out, const Tensor& input,
                                              const Tensor& weight_variable);

// Same statistic for a conv layer (feature = output channel). Shapes:
// grad_out N x F x H' x W', input N x C x H x W, weight_variable
// F x C x KH x KW.
std::vector<double> per_sample_sq_sums_conv(const Tensor& grad_out, const Tensor& input,
                                            const Tensor& weight_variable, int stride, int padding);

// Folds a per-weight constant gradient shift c (the L2-through-weight term
// of the objective, identical for every sample) into per-sample squared
// sums that were computed without it:
//   sum_b (p_b + c)^2 = sum_b p_b^2 + 2 c sum_b p_b + B c^2,
// with sum_b p_b = B * task_numerator. Features are contiguous row-major
// blocks of feature_size weights.
void shift_per_sample_sq_sums(std::vector<double>& sums, const Tensor& task_numerator,
                              const Tensor& per_weight_shift, int batch_size, int64_t feature_size);

}  // namespace scl
