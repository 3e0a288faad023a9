#include "scl/masking.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scl {

void Ste::validate() const {
  switch (kind) {
    case SteKind::ClippedReLU:
      if (!(alpha > 0.0f)) throw std::invalid_argument("ClippedReLU requires alpha > 0");
      break;
    case SteKind::LeakyReLU:
      if (!(alpha > 0.0f && alpha < 1.0f)) throw std::invalid_argument("LeakyReLU requires 0 < alpha < 1");
      break;
    default:
      break;
  }
}

SteKind ste_kind_from_string(const std::string& name) {
  if (name == "relu") return SteKind::ReLU;
  if (name == "clipped_relu") return SteKind::ClippedReLU;
  if (name == "leaky_relu") return SteKind::LeakyReLU;
  if (name == "softplus") return SteKind::Softplus;
  if (name == "identity") return SteKind::Identity;
  throw std::invalid_argument("unknown STE kind '" + name +
                              "' (expected relu, clipped_relu, leaky_relu, softplus, identity)");
}

const char* ste_kind_name(SteKind kind) {
  switch (kind) {
    case SteKind::ReLU: return "relu";
    case SteKind::ClippedReLU: return "clipped_relu";
    case SteKind::LeakyReLU: return "leaky_relu";
    case SteKind::Softplus: return "softplus";
    case SteKind::Identity: return "identity";
  }
  return "?";
}

MaskedParameter::MaskedParameter(Tensor w, Tensor m)
    : weight_variable(std::move(w)), mask_variable(std::move(m)) {
  if (!weight_variable.same_shape(mask_variable))
    throw std::invalid_argument("masked parameter shapes differ: " + weight_variable.shape_str() + " vs " +
                                mask_variable.shape_str());
}

Tensor unit_step(const Tensor& mask_variable) {
  Tensor m(mask_variable.shape);
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = mask_variable.data[i] > 0.0f ? 1.0f : 0.0f;
  return m;
}

Tensor effective_weight(const MaskedParameter& p) {
  Tensor w(p.weight_variable.shape);
  for (size_t i = 0; i < w.data.size(); ++i)
    w.data[i] = p.mask_variable.data[i] > 0.0f ? p.weight_variable.data[i] : 0.0f;
  return w;
}

float ste_proxy_gradient_scalar(const Ste& ste, float x) {
  switch (ste.kind) {
    case SteKind::ReLU:
      return x > 0.0f ? 1.0f : 0.0f;
    case SteKind::ClippedReLU:
      return (x > 0.0f && x < ste.alpha) ? 1.0f : 0.0f;
    case SteKind::LeakyReLU:
      return x < 0.0f ? ste.alpha : 1.0f;
    case SteKind::Softplus:
      return 1.0f / (1.0f + std::exp(-x));
    case SteKind::Identity:
      return 1.0f;
  }
  return 0.0f;
}

Tensor ste_proxy_gradient(const Ste& ste, const Tensor& mask_variable) {
  ste.validate();
  Tensor g(mask_variable.shape);
  for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = ste_proxy_gradient_scalar(ste, mask_variable.data[i]);
  return g;
}

Tensor weight_variable_gradient(const Tensor& grad_w, const MaskedParameter& p) {
  if (!grad_w.same_shape(p.weight_variable))
    throw std::invalid_argument("weight gradient shape " + grad_w.shape_str() + " does not match parameter " +
                                p.weight_variable.shape_str());
  return grad_w;
}

Tensor mask_variable_gradient(const Tensor& grad_w, const MaskedParameter& p, const Ste& ste) {
  if (!grad_w.same_shape(p.mask_variable))
    throw std::invalid_argument("weight gradient shape " + grad_w.shape_str() + " does not match parameter " +
                                p.mask_variable.shape_str());
  ste.validate();
  Tensor g(grad_w.shape);
  for (size_t i = 0; i < g.data.size(); ++i)
    g.data[i] = grad_w.data[i] * p.weight_variable.data[i] *
                ste_proxy_gradient_scalar(ste, p.mask_variable.data[i]);
  return g;
}

Tensor toy_mask_loss_gradient(const Tensor& mask_variable, const Tensor& m_star, const Ste& ste) {
  if (!mask_variable.same_shape(m_star))
    throw std::invalid_argument("toy loss shape mismatch: " + mask_variable.shape_str() + " vs " +
                                m_star.shape_str());
  ste.validate();
  Tensor g(mask_variable.shape);
  for (size_t i = 0; i < g.data.size(); ++i) {
    const float target = m_star.data[i];
    if (target != 0.0f && target != 1.0f)
      throw std::invalid_argument("toy loss target must be binary, got " + std::to_string(target));
    const float residual = (mask_variable.data[i] > 0.0f ? 1.0f : 0.0f) - target;
    g.data[i] = ste_proxy_gradient_scalar(ste, mask_variable.data[i]) * residual;
  }
  return g;
}

SparseWeights extract_sparse(const MaskedParameter& p) {
  SparseWeights s;
  s.shape = p.weight_variable.shape;
  for (size_t i = 0; i < p.mask_variable.data.size(); ++i) {
    if (p.mask_variable.data[i] > 0.0f) {
      s.indices.push_back(static_cast<int64_t>(i));
      s.values.push_back(p.weight_variable.data[i]);
    }
  }
  return s;
}

Tensor densify(const SparseWeights& s) {
  Tensor w = Tensor::zeros(s.shape);
  for (size_t i = 0; i < s.indices.size(); ++i) w.data[static_cast<size_t>(s.indices[i])] = s.values[i];
  return w;
}

}  // namespace scl
