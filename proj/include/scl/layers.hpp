#pragma once

#include <memory>
#include <vector>

#include "scl/graph.hpp"
#include "scl/masking.hpp"
#include "scl/rng.hpp"
#include "scl/tensor.hpp"

namespace scl {

// Zero-mean normal with variance 2/fan_in.
Tensor he_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng);

// Batch normalization over the feature dimension of a B x F input.
// Training mode uses batch statistics and updates the running estimates;
// eval mode uses the running estimates.
struct BatchNorm {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;
  NodeId gamma_id = -1, beta_id = -1;

  explicit BatchNorm(int64_t features);
  int64_t features() const { return gamma.numel(); }
  NodeId forward(Graph& g, NodeId x, bool train);
};

// Base of the prunable layers. forward() registers w~ and m~ as graph
// leaves, forms the effective weight through a masked_weight node and
// installs the gradient hook that redefines both input gradients:
//   dL/dw~ := dL/dw            (mask factor dropped)
//   dL/dm~ := dL/dw (.) w~ (.) proxy(m~)
// When l2_decay is nonzero the hook folds the decay gradient of the
// L2-regularized effective weight (l2_decay * w) into dL/dw first, so both
// redefined gradients and the normalization statistics see the full
// objective.
struct MaskedLayer {
  MaskedParameter param;
  Ste ste = Ste::identity();
  float l2_decay = 0.0f;  // 2 * lambda2 when L2 acts on effective weights
  NodeId w_tilde_id = -1, m_tilde_id = -1, weff_id = -1, x_id = -1, y_id = -1;

  virtual ~MaskedLayer() = default;
  virtual NodeId forward(Graph& g, NodeId x) = 0;

  // Feature groups for mask-gradient normalization. Every group is one
  // contiguous row-major block of the weight tensor.
  virtual int64_t feature_count() const = 0;
  virtual int64_t feature_size() const = 0;
  virtual std::vector<double> feature_sq_sums(const Graph& g) const = 0;

  // Squared sums with the batch-mean gradient standing in for the
  // per-sample gradients: every sample contributes the same product, so
  // the sum collapses to B * sum_k (task_k)^2.
  std::vector<double> feature_sq_sums_batch_mean(const Graph& g) const;

  // Gradients after backward: the hook has already applied the
  // redefinitions, so these are reads of the leaf gradients.
  const Tensor& weight_grad(const Graph& g) const { return g.grad(w_tilde_id); }
  const Tensor& mask_grad(const Graph& g) const { return g.grad(m_tilde_id); }

  // Mask gradient with each feature group divided by its per-batch RMS
  // scale. The connectivity-decay term is not included here. With
  // batch_mean_stat the scale comes from the batch-mean gradient instead
  // of the exact per-sample products, which leaves each feature's gradient
  // vector at unit RMS every batch.
  Tensor normalized_mask_gradient(const Graph& g, float eps, bool batch_mean_stat = false) const;

 protected:
  NodeId forward_masked_weight(Graph& g);
  // Folds the constant per-weight L2 term into the per-sample statistics.
  std::vector<double> shifted_sq_sums(const Graph& g, std::vector<double> sums) const;
};

// Fully connected layer without bias: y = x w^T with w = w~ (.) H(m~).
// Feature group = one output neuron's fan-in.
struct MaskedAffine final : MaskedLayer {
  int64_t out_features = 0, in_features = 0;

  MaskedAffine(int64_t out, int64_t in);
  void init_he(Rng& rng);
  NodeId forward(Graph& g, NodeId x) override;
  int64_t feature_count() const override { return out_features; }
  int64_t feature_size() const override { return in_features; }
  std::vector<double> feature_sq_sums(const Graph& g) const override;
};

// Convolution layer without bias. Feature group = one output channel's
// kernel.
struct MaskedConv2D final : MaskedLayer {
  int stride = 1, padding = 0;

  MaskedConv2D(int64_t out_channels, int64_t in_channels, int64_t kh, int64_t kw, int stride = 1,
               int padding = 0);
  void init_he(Rng& rng);
  NodeId forward(Graph& g, NodeId x) override;
  int64_t feature_count() const override { return param.weight_variable.shape[0]; }
  int64_t feature_size() const override {
    return param.weight_variable.numel() / param.weight_variable.shape[0];
  }
  std::vector<double> feature_sq_sums(const Graph& g) const override;
};

class Network {
 public:
  virtual ~Network() = default;
  virtual const char* arch() const = 0;
  virtual NodeId forward(Graph& g, NodeId x, bool train) = 0;
  virtual std::vector<MaskedLayer*> masked_layers() = 0;
  virtual std::vector<BatchNorm*> batch_norms() = 0;

  std::vector<const MaskedLayer*> masked_layers() const {
    auto layers = const_cast<Network*>(this)->masked_layers();
    return {layers.begin(), layers.end()};
  }
  int64_t masked_weight_count() const;
  int64_t surviving_count() const;
};

// DenseNet-style fully connected classifier: every block sees the raw
// input concatenated with all previous block outputs and emits `growth`
// features through affine -> BN -> ReLU; the classifier maps the final
// concatenation to the class logits.
class DenseFcNet final : public Network {
 public:
  DenseFcNet(int depth, int growth, int64_t input_dim, int64_t classes);
  const char* arch() const override { return "dense_fc"; }
  NodeId forward(Graph& g, NodeId x, bool train) override;
  std::vector<MaskedLayer*> masked_layers() override;
  std::vector<BatchNorm*> batch_norms() override;

  void init(uint64_t seed, float mask_init_value);

  int depth() const { return static_cast<int>(blocks_.size()); }
  int64_t input_dim() const { return input_dim_; }
  int64_t classes() const { return classes_; }
  MaskedAffine& block(int i) { return blocks_[static_cast<size_t>(i)]; }
  MaskedAffine& classifier() { return classifier_; }

 private:
  std::vector<MaskedAffine> blocks_;
  std::vector<BatchNorm> bns_;
  MaskedAffine classifier_;
  int64_t input_dim_, classes_;
};

DenseFcNet build_dense_fc(int depth = 16, int growth = 8, int64_t input_dim = 784, int64_t classes = 10);

// Three equal-width affine -> BN -> ReLU stages used by the map-fitting
// experiment.
class MapfitNet final : public Network {
 public:
  MapfitNet(int width, int depth);
  const char* arch() const override { return "mapfit"; }
  NodeId forward(Graph& g, NodeId x, bool train) override;
  std::vector<MaskedLayer*> masked_layers() override;
  std::vector<BatchNorm*> batch_norms() override;

  void init_weights(uint64_t seed);
  void init_masks_normal(Rng& rng);
  void set_ste(const Ste& ste);

 private:
  std::vector<MaskedAffine> layers_;
  std::vector<BatchNorm> bns_;
};

MapfitNet build_mapfit(int width = 64, int depth = 3, uint64_t seed = 0);

}  // namespace scl
