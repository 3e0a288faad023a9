#include "scl/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "scl/gradnorm.hpp"

namespace scl {

Tensor he_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  if (fan_in < 1) throw std::invalid_argument("he_init requires fan_in >= 1");
  const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
  return rng.normal_tensor(std::move(shape), 0.0f, stddev);
}

BatchNorm::BatchNorm(int64_t features)
    : gamma(Tensor::full({features}, 1.0f)),
      beta(Tensor::zeros({features})),
      running_mean(Tensor::zeros({features})),
      running_var(Tensor::full({features}, 1.0f)) {}

NodeId BatchNorm::forward(Graph& g, NodeId x, bool train) {
  gamma_id = g.leaf(gamma);
  beta_id = g.leaf(beta);
  const Tensor& vx = g.value(x);
  if (vx.rank() != 2 || vx.shape[1] != features())
    throw std::invalid_argument("batch norm expects BxF input with F=" + std::to_string(features()) +
                                ", got " + vx.shape_str());
  const int64_t batch = vx.shape[0], f = vx.shape[1];

  if (!train) {
    Tensor inv({f});
    for (int64_t j = 0; j < f; ++j) inv.data[static_cast<size_t>(j)] = 1.0f / std::sqrt(running_var.at(j) + eps);
    Tensor y({batch, f});
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t j = 0; j < f; ++j)
        y.at(b, j) = gamma.at(j) * (vx.at(b, j) - running_mean.at(j)) * inv.data[static_cast<size_t>(j)] +
                     beta.at(j);
    const NodeId gid = gamma_id, bid = beta_id;
    Tensor mean = running_mean;
    return g.custom(std::move(y), {x, gamma_id, beta_id},
                    [x, gid, bid, inv = std::move(inv), mean = std::move(mean)](Graph& gr, Graph::Node& self) {
                      const Tensor& vx2 = gr.value(x);
                      const Tensor& vgamma = gr.value(gid);
                      const int64_t nb = vx2.shape[0], nf = vx2.shape[1];
                      Tensor gx({nb, nf}), gg({nf}), gb({nf});
                      for (int64_t b = 0; b < nb; ++b)
                        for (int64_t j = 0; j < nf; ++j) {
                          const float go = self.grad.at(b, j);
                          const float xhat = (vx2.at(b, j) - mean.at(j)) * inv.at(j);
                          gx.at(b, j) = go * vgamma.at(j) * inv.at(j);
                          gg.at(j) += go * xhat;
                          gb.at(j) += go;
                        }
                      gr.accumulate(x, gx);
                      gr.accumulate(gid, gg);
                      gr.accumulate(bid, gb);
                    },
                    "batch_norm_eval");
  }

  Tensor mean({f}), var({f}), inv_std({f});
  for (int64_t j = 0; j < f; ++j) {
    float m = 0.0f;
    for (int64_t b = 0; b < batch; ++b) m += vx.at(b, j);
    mean.at(j) = m / static_cast<float>(batch);
  }
  for (int64_t j = 0; j < f; ++j) {
    float v = 0.0f;
    for (int64_t b = 0; b < batch; ++b) {
      const float d = vx.at(b, j) - mean.at(j);
      v += d * d;
    }
    var.at(j) = v / static_cast<float>(batch);
    inv_std.at(j) = 1.0f / std::sqrt(var.at(j) + eps);
  }
  for (int64_t j = 0; j < f; ++j) {
    running_mean.at(j) = (1.0f - momentum) * running_mean.at(j) + momentum * mean.at(j);
    running_var.at(j) = (1.0f - momentum) * running_var.at(j) + momentum * var.at(j);
  }

  Tensor xhat({batch, f});
  Tensor y({batch, f});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t j = 0; j < f; ++j) {
      xhat.at(b, j) = (vx.at(b, j) - mean.at(j)) * inv_std.at(j);
      y.at(b, j) = gamma.at(j) * xhat.at(b, j) + beta.at(j);
    }

  const NodeId gid = gamma_id, bid = beta_id;
  return g.custom(std::move(y), {x, gamma_id, beta_id},
                  [x, gid, bid, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& gr,
                                                                                      Graph::Node& self) {
                    const Tensor& vgamma = gr.value(gid);
                    const int64_t nb = xhat.shape[0], nf = xhat.shape[1];
                    const float invb = 1.0f / static_cast<float>(nb);
                    Tensor gg({nf}), gb({nf});
                    for (int64_t b = 0; b < nb; ++b)
                      for (int64_t j = 0; j < nf; ++j) {
                        const float go = self.grad.at(b, j);
                        gg.at(j) += go * xhat.at(b, j);
                        gb.at(j) += go;
                      }
                    Tensor gx({nb, nf});
                    for (int64_t b = 0; b < nb; ++b)
                      for (int64_t j = 0; j < nf; ++j) {
                        const float dxhat = self.grad.at(b, j) * vgamma.at(j);
                        gx.at(b, j) = inv_std.at(j) *
                                      (dxhat - invb * (gb.at(j) * vgamma.at(j) +
                                                       xhat.at(b, j) * gg.at(j) * vgamma.at(j)));
                      }
                    gr.accumulate(x, gx);
                    gr.accumulate(gid, gg);
                    gr.accumulate(bid, gb);
                  },
                  "batch_norm");
}

NodeId MaskedLayer::forward_masked_weight(Graph& g) {
  w_tilde_id = g.leaf(param.weight_variable);
  m_tilde_id = g.leaf(param.mask_variable);
  weff_id = g.masked_weight(w_tilde_id, m_tilde_id);
  const NodeId wid = w_tilde_id, mid = m_tilde_id, eid = weff_id;
  const Ste ste_copy = ste;
  const float decay = l2_decay;
  g.set_hook(weff_id, [wid, mid, eid, ste_copy, decay](Graph& gr, Graph::Node& self) {
    const Tensor& w = gr.value(wid);
    const Tensor& m = gr.value(mid);
    const Tensor& weff = gr.value(eid);
    // dL/dw, with the decay gradient of the regularized effective weight
    Tensor gw = self.grad;
    if (decay > 0.0f)
      for (size_t i = 0; i < gw.data.size(); ++i) gw.data[i] += decay * weff.data[i];
    // dL/dw~ := dL/dw
    gr.accumulate(wid, gw);
    // dL/dm~ := dL/dw (.) w~ (.) proxy(m~)
    Tensor gm(m.shape);
    for (size_t i = 0; i < m.data.size(); ++i)
      gm.data[i] = gw.data[i] * w.data[i] * ste_proxy_gradient_scalar(ste_copy, m.data[i]);
    gr.accumulate(mid, gm);
  });
  return weff_id;
}

std::vector<double> MaskedLayer::shifted_sq_sums(const Graph& g, std::vector<double> sums) const {
  if (l2_decay <= 0.0f) return sums;
  const Tensor& weff = g.value(weff_id);
  Tensor task = hadamard(g.grad(weff_id), param.weight_variable);
  Tensor shift(weff.shape);
  for (size_t i = 0; i < shift.data.size(); ++i)
    shift.data[i] = l2_decay * weff.data[i] * param.weight_variable.data[i];
  shift_per_sample_sq_sums(sums, task, shift, static_cast<int>(g.value(x_id).shape[0]), feature_size());
  return sums;
}

std::vector<double> MaskedLayer::feature_sq_sums_batch_mean(const Graph& g) const {
  const Tensor& mg = g.grad(m_tilde_id);
  const int64_t groups = feature_count();
  const int64_t size = feature_size();
  const double batch = static_cast<double>(g.value(x_id).shape[0]);
  std::vector<double> sums(static_cast<size_t>(groups), 0.0);
  for (int64_t f = 0; f < groups; ++f) {
    double acc = 0.0;
    const size_t base = static_cast<size_t>(f * size);
    for (int64_t i = 0; i < size; ++i) {
      const double v = mg.data[base + static_cast<size_t>(i)];
      acc += v * v;
    }
    sums[static_cast<size_t>(f)] = batch * acc;
  }
  return sums;
}

Tensor MaskedLayer::normalized_mask_gradient(const Graph& g, float eps, bool batch_mean_stat) const {
  const Tensor& mg = g.grad(m_tilde_id);
  const std::vector<double> sq_sums = batch_mean_stat ? feature_sq_sums_batch_mean(g) : feature_sq_sums(g);
  const int64_t groups = feature_count();
  const int64_t size = feature_size();
  const int batch = static_cast<int>(g.value(x_id).shape[0]);
  Tensor out(mg.shape);
  Tensor group({size});
  for (int64_t f = 0; f < groups; ++f) {
    const size_t base = static_cast<size_t>(f * size);
    for (int64_t i = 0; i < size; ++i) group.data[static_cast<size_t>(i)] = mg.data[base + static_cast<size_t>(i)];
    Tensor norm = normalize_mask_gradients(group, sq_sums[static_cast<size_t>(f)], batch,
                                           static_cast<int>(size), eps);
    for (int64_t i = 0; i < size; ++i) out.data[base + static_cast<size_t>(i)] = norm.data[static_cast<size_t>(i)];
  }
  return out;
}

MaskedAffine::MaskedAffine(int64_t out, int64_t in) : out_features(out), in_features(in) {
  param = MaskedParameter(Tensor::zeros({out, in}), Tensor::full({out, in}, 1.0f));
}

void MaskedAffine::init_he(Rng& rng) { param.weight_variable = he_init({out_features, in_features}, in_features, rng); }

NodeId MaskedAffine::forward(Graph& g, NodeId x) {
  const Tensor& vx = g.value(x);
  if (vx.rank() != 2 || vx.shape[1] != in_features)
    throw std::invalid_argument("affine expects Bx" + std::to_string(in_features) + " input, got " +
                                vx.shape_str());
  x_id = x;
  forward_masked_weight(g);
  const NodeId wt = g.transpose(weff_id);
  y_id = g.matmul(x, wt);
  return y_id;
}

std::vector<double> MaskedAffine::feature_sq_sums(const Graph& g) const {
  return shifted_sq_sums(g, per_sample_sq_sums_affine(g.grad(y_id), g.value(x_id), param.weight_variable));
}

MaskedConv2D::MaskedConv2D(int64_t out_channels, int64_t in_channels, int64_t kh, int64_t kw, int stride_,
                           int padding_)
    : stride(stride_), padding(padding_) {
  param = MaskedParameter(Tensor::zeros({out_channels, in_channels, kh, kw}),
                          Tensor::full({out_channels, in_channels, kh, kw}, 1.0f));
}

void MaskedConv2D::init_he(Rng& rng) {
  const auto& s = param.weight_variable.shape;
  param.weight_variable = he_init(s, s[1] * s[2] * s[3], rng);
}

NodeId MaskedConv2D::forward(Graph& g, NodeId x) {
  x_id = x;
  forward_masked_weight(g);
  y_id = g.conv2d(x, weff_id, stride, padding);
  return y_id;
}

std::vector<double> MaskedConv2D::feature_sq_sums(const Graph& g) const {
  return shifted_sq_sums(
      g, per_sample_sq_sums_conv(g.grad(y_id), g.value(x_id), param.weight_variable, stride, padding));
}

int64_t Network::masked_weight_count() const {
  int64_t n = 0;
  for (const MaskedLayer* l : masked_layers()) n += l->param.weight_variable.numel();
  return n;
}

int64_t Network::surviving_count() const {
  int64_t n = 0;
  for (const MaskedLayer* l : masked_layers())
    for (float v : l->param.mask_variable.data) n += v > 0.0f ? 1 : 0;
  return n;
}

DenseFcNet::DenseFcNet(int depth, int growth, int64_t input_dim, int64_t classes)
    : classifier_(classes, input_dim + static_cast<int64_t>(depth) * growth),
      input_dim_(input_dim),
      classes_(classes) {
  blocks_.reserve(static_cast<size_t>(depth));
  bns_.reserve(static_cast<size_t>(depth));
  for (int l = 0; l < depth; ++l) {
    blocks_.emplace_back(growth, input_dim + static_cast<int64_t>(l) * growth);
    bns_.emplace_back(growth);
  }
}

void DenseFcNet::init(uint64_t seed, float mask_init_value) {
  Rng rng = Rng::derive(seed, 0x77eb11);
  for (MaskedAffine& b : blocks_) {
    b.init_he(rng);
    b.param.mask_variable = Tensor::full(b.param.mask_variable.shape, mask_init_value);
  }
  classifier_.init_he(rng);
  classifier_.param.mask_variable = Tensor::full(classifier_.param.mask_variable.shape, mask_init_value);
}

NodeId DenseFcNet::forward(Graph& g, NodeId x, bool train) {
  NodeId features = x;
  for (size_t l = 0; l < blocks_.size(); ++l) {
    NodeId y = blocks_[l].forward(g, features);
    y = bns_[l].forward(g, y, train);
    y = g.relu(y);
    features = g.concat_cols(features, y);
  }
  return classifier_.forward(g, features);
}

std::vector<MaskedLayer*> DenseFcNet::masked_layers() {
  std::vector<MaskedLayer*> out;
  out.reserve(blocks_.size() + 1);
  for (MaskedAffine& b : blocks_) out.push_back(&b);
  out.push_back(&classifier_);
  return out;
}

std::vector<BatchNorm*> DenseFcNet::batch_norms() {
  std::vector<BatchNorm*> out;
  out.reserve(bns_.size());
  for (BatchNorm& bn : bns_) out.push_back(&bn);
  return out;
}

DenseFcNet build_dense_fc(int depth, int growth, int64_t input_dim, int64_t classes) {
  return DenseFcNet(depth, growth, input_dim, classes);
}

MapfitNet::MapfitNet(int width, int depth) {
  layers_.reserve(static_cast<size_t>(depth));
  bns_.reserve(static_cast<size_t>(depth));
  for (int l = 0; l < depth; ++l) {
    layers_.emplace_back(width, width);
    bns_.emplace_back(width);
  }
}

void MapfitNet::init_weights(uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x3a9f01);
  for (MaskedAffine& l : layers_) l.init_he(rng);
}

void MapfitNet::init_masks_normal(Rng& rng) {
  for (MaskedAffine& l : layers_) l.param.mask_variable = rng.normal_tensor(l.param.mask_variable.shape);
}

void MapfitNet::set_ste(const Ste& s) {
  s.validate();
  for (MaskedAffine& l : layers_) l.ste = s;
}

NodeId MapfitNet::forward(Graph& g, NodeId x, bool train) {
  NodeId cur = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    cur = layers_[l].forward(g, cur);
    cur = bns_[l].forward(g, cur, train);
    cur = g.relu(cur);
  }
  return cur;
}

std::vector<MaskedLayer*> MapfitNet::masked_layers() {
  std::vector<MaskedLayer*> out;
  for (MaskedAffine& l : layers_) out.push_back(&l);
  return out;
}

std::vector<BatchNorm*> MapfitNet::batch_norms() {
  std::vector<BatchNorm*> out;
  for (BatchNorm& bn : bns_) out.push_back(&bn);
  return out;
}

MapfitNet build_mapfit(int width, int depth, uint64_t seed) {
  MapfitNet net(width, depth);
  net.init_weights(seed);
  return net;
}

}  // namespace scl
