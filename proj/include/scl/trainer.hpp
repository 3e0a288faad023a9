#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "scl/data.hpp"
#include "scl/layers.hpp"
#include "scl/masking.hpp"

namespace scl {

// Where the L2 term acts. `Effective` regularizes the masked weights
// w = w~ (.) H(m~): its gradient reaches the mask variables through the
// redefined chain (and is normalized with the task term), which is the
// source of decay-free pruning at lambda1 = 0. `WeightVariable`
// regularizes w~ directly and produces no mask gradient.
enum class L2Mode { Effective, WeightVariable };

// Full specification of one training run.
struct TrainConfig {
  std::string arch = "dense_fc";
  float lambda1 = 0.0f;
  float lambda2 = 1e-4f;
  L2Mode l2_mode = L2Mode::Effective;
  int epochs = 60;
  int batch_size = 64;
  // (start epoch, learning rate), strictly increasing, first entry at 0.
  std::vector<std::pair<int, float>> lr_schedule = {{0, 0.1f}, {45, 0.01f}};
  // Half-open [begin, end) epoch ranges with no mask updates.
  std::vector<std::pair<int, int>> mask_freeze = {{0, 15}, {45, 60}};
  uint64_t seed = 1;
  Ste ste = Ste::identity();
  bool gradnorm = true;
  // Scale statistic for Eq-19-style normalization: exact per-sample
  // products, or the batch-mean gradient as the per-sample stand-in.
  bool gradnorm_batch_stat = false;
  float gradnorm_eps = 1e-8f;
  float momentum = 0.0f;
  float mask_init = 1.0f;

  void validate() const;
  float lr_at(int epoch) const;
  bool mask_frozen_at(int epoch) const;
};

struct EpochRecord {
  int epoch = 0;
  float objective = 0.0f;
  float task_loss = 0.0f;
  int64_t degree = 0;
  double sparsity = 0.0;
  double metric = 0.0;  // test accuracy for classification runs, MSE for map fitting
};

struct RunHistory {
  std::vector<EpochRecord> records;
};

// p <- p - lr * g, elementwise.
void sgd_step(Tensor& params, const Tensor& grads, float lr);

struct TrainResult {
  std::unique_ptr<DenseFcNet> net;
  RunHistory history;
};

// Scheduled SGD over weight and mask variables with freeze windows:
// forward through the binarized masks, backward through the redefined
// gradients, per-feature normalization when enabled, decay added after
// normalization. Aborts on NaN loss.
TrainResult train(const TrainConfig& config, const MnistData& data);

double evaluate_accuracy(Network& net, const MnistSplit& split, int batch_size = 256);
Tensor eval_logits(Network& net, const Tensor& images, int batch_size = 256);

double sparsity(const Network& net);
std::vector<double> density_profile(const Network& net);

// Per-pixel count of surviving first-layer-visible connections, normalized
// to [0,1]. Requires the dense_fc architecture.
Tensor input_connection_heatmap(Network& net);

// Map-fitting experiment: a benchmark network with random masks defines
// target outputs; mask variables are re-initialized and trained alone to
// match them. One MSE series per (STE, normalization) condition and seed.
struct MapfitSeries {
  std::string ste_name;
  bool norm = false;
  uint64_t seed = 0;
  std::vector<float> mse;  // entry per step, plus the final state

  float final_mse() const { return mse.empty() ? 0.0f : mse.back(); }
};

struct MapfitOptions {
  std::vector<Ste> kinds = {Ste::relu(), Ste::clipped_relu(), Ste::leaky_relu(), Ste::softplus(),
                            Ste::identity()};
  int seeds = 5;
  int steps = 1500;
  float lr = 0.05f;
  int64_t n_inputs = 128;
  int width = 64;
  int depth = 3;
  uint64_t base_seed = 1;
  float gradnorm_eps = 1e-8f;
  int jobs = 1;
  bool norm_on = true;
  bool norm_off = true;
};

std::vector<MapfitSeries> mapfit_experiment(const MapfitOptions& options);

}  // namespace scl
