#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

// Proxy-gradient rule used to relax the unit step in backpropagation.
enum class SteKind { ReLU, ClippedReLU, LeakyReLU, Softplus, Identity };

struct Ste {
  SteKind kind = SteKind::Identity;
  // Clip threshold for ClippedReLU (> 0), negative slope for LeakyReLU
  // (in (0, 1)). Ignored by the other kinds.
  float alpha = 1.0f;

  static Ste identity() { return {SteKind::Identity, 1.0f}; }
  static Ste relu() { return {SteKind::ReLU, 1.0f}; }
  static Ste clipped_relu(float alpha = 1.0f) { return {SteKind::ClippedReLU, alpha}; }
  static Ste leaky_relu(float alpha = 0.01f) { return {SteKind::LeakyReLU, alpha}; }
  static Ste softplus() { return {SteKind::Softplus, 1.0f}; }

  void validate() const;
};

SteKind ste_kind_from_string(const std::string& name);
const char* ste_kind_name(SteKind kind);

// One prunable layer's weights: the trainable weight variable and the
// trainable mask variable whose sign decides connectivity.
struct MaskedParameter {
  Tensor weight_variable;  // w~
  Tensor mask_variable;    // m~, same shape
  bool frozen_mask = false;

  MaskedParameter() = default;
  MaskedParameter(Tensor w, Tensor m);
};

// m = H(m~): 0 where m~ <= 0, 1 where m~ > 0.
Tensor unit_step(const Tensor& mask_variable);

// w = w~ (.) H(m~).
Tensor effective_weight(const MaskedParameter& p);

// Elementwise derivative of the STE's surrogate function.
Tensor ste_proxy_gradient(const Ste& ste, const Tensor& mask_variable);
float ste_proxy_gradient_scalar(const Ste& ste, float x);

// dL/dw~ := dL/dw. The mask factor of the plain chain rule is dropped so
// zero-masked weights keep training.
Tensor weight_variable_gradient(const Tensor& grad_w, const MaskedParameter& p);

// dL/dm~ := (dL/dw (.) w~) (.) proxy(m~). Under Identity the proxy is 1.
Tensor mask_variable_gradient(const Tensor& grad_w, const MaskedParameter& p, const Ste& ste);

// Gradient of the toy objective 1/2 (H(m~) - m*)^2 with the proxy
// substituted for the step derivative. m* must be 0/1-valued.
Tensor toy_mask_loss_gradient(const Tensor& mask_variable, const Tensor& m_star, const Ste& ste);

// Post-training sparse form: only the surviving positions of w~ (.) H(m~),
// indices sorted ascending in row-major linear order.
struct SparseWeights {
  std::vector<int64_t> shape;
  std::vector<int64_t> indices;
  std::vector<float> values;

  int64_t total() const { return shape_numel(shape); }
  double density() const { return total() == 0 ? 0.0 : static_cast<double>(indices.size()) / static_cast<double>(total()); }
};

SparseWeights extract_sparse(const MaskedParameter& p);
Tensor densify(const SparseWeights& s);

}  // namespace scl
