#include "scl/trainer.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "scl/gradnorm.hpp"
#include "scl/objective.hpp"

namespace scl {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (lambda1 < 0.0f || lambda2 < 0.0f) throw std::invalid_argument("decay coefficients must be >= 0");
  if (lr_schedule.empty() || lr_schedule.front().first != 0)
    throw std::invalid_argument("lr schedule must start at epoch 0");
  for (size_t i = 1; i < lr_schedule.size(); ++i)
    if (lr_schedule[i].first <= lr_schedule[i - 1].first)
      throw std::invalid_argument("lr schedule epochs must be strictly increasing");
  for (const auto& [lo, hi] : mask_freeze)
    if (lo < 0 || hi > epochs || lo >= hi)
      throw std::invalid_argument("mask freeze range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                  ") outside [0, " + std::to_string(epochs) + ")");
  ste.validate();
}

float TrainConfig::lr_at(int epoch) const {
  float lr = lr_schedule.front().second;
  for (const auto& [start, rate] : lr_schedule)
    if (epoch >= start) lr = rate;
  return lr;
}

bool TrainConfig::mask_frozen_at(int epoch) const {
  for (const auto& [lo, hi] : mask_freeze)
    if (epoch >= lo && epoch < hi) return true;
  return false;
}

void sgd_step(Tensor& params, const Tensor& grads, float lr) {
  if (!params.same_shape(grads))
    throw std::invalid_argument("sgd_step shape mismatch: " + params.shape_str() + " vs " + grads.shape_str());
  if (!(lr > 0.0f)) throw std::invalid_argument("learning rate must be positive");
  for (size_t i = 0; i < params.data.size(); ++i) params.data[i] -= lr * grads.data[i];
}

namespace {

// SGD with optional momentum over one tensor; velocity buffers are owned by
// the training loop.
struct Updater {
  float momentum;
  std::vector<Tensor> velocity;

  void step(size_t slot, Tensor& params, const Tensor& grads, float lr) {
    if (momentum <= 0.0f) {
      sgd_step(params, grads, lr);
      return;
    }
    if (velocity.size() <= slot) velocity.resize(slot + 1);
    Tensor& v = velocity[slot];
    if (v.data.empty()) v = Tensor::zeros(params.shape);
    for (size_t i = 0; i < v.data.size(); ++i) {
      v.data[i] = momentum * v.data[i] + grads.data[i];
      params.data[i] -= lr * v.data[i];
    }
  }
};

std::vector<Tensor> current_masks(const Network& net) {
  std::vector<Tensor> masks;
  for (const MaskedLayer* l : net.masked_layers()) masks.push_back(unit_step(l->param.mask_variable));
  return masks;
}

std::vector<Tensor> weight_variables(const Network& net) {
  std::vector<Tensor> ws;
  for (const MaskedLayer* l : net.masked_layers()) ws.push_back(l->param.weight_variable);
  return ws;
}

std::vector<Tensor> effective_weights(const Network& net) {
  std::vector<Tensor> ws;
  for (const MaskedLayer* l : net.masked_layers()) ws.push_back(effective_weight(l->param));
  return ws;
}

}  // namespace

TrainResult train(const TrainConfig& config, const MnistData& data) {
  config.validate();
  if (config.arch != "dense_fc")
    throw std::invalid_argument("unknown architecture '" + config.arch + "' (expected dense_fc)");

  auto net = std::make_unique<DenseFcNet>(build_dense_fc(16, 8, data.train.images.shape[1], 10));
  net->init(config.seed, config.mask_init);
  const bool l2_effective = config.l2_mode == L2Mode::Effective && config.lambda2 > 0.0f;
  for (MaskedLayer* l : net->masked_layers()) {
    l->ste = config.ste;
    l->l2_decay = l2_effective ? 2.0f * config.lambda2 : 0.0f;
  }

  const int64_t n_train = data.train.images.shape[0];
  const int64_t total_masked = net->masked_weight_count();
  RunHistory history;
  Updater weight_updater{config.momentum, {}};
  Updater mask_updater{config.momentum, {}};
  Updater bn_updater{config.momentum, {}};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const float lr = config.lr_at(epoch);
    const bool frozen = config.mask_frozen_at(epoch);
    double task_sum = 0.0, objective_sum = 0.0;
    int64_t seen = 0;
    int batch_index = 0;

    for (const auto& rows : batches(n_train, config.batch_size, config.seed, epoch)) {
      Tensor x = gather_rows(data.train.images, rows);
      std::vector<int> y = gather_labels(data.train.labels, rows);

      Graph g;
      const NodeId input = g.leaf(std::move(x));
      const NodeId logits = net->forward(g, input, /*train=*/true);
      const NodeId loss = g.cross_entropy(logits, y);
      const float task = g.value(loss).data[0];
      if (std::isnan(task))
        throw std::runtime_error("NaN loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index));
      g.backward(loss);

      const int64_t degree_now = net->surviving_count();
      const float l2_now =
          l2_effective ? l2_penalty(effective_weights(*net)) : l2_penalty(weight_variables(*net));
      task_sum += static_cast<double>(task) * static_cast<double>(rows.size());
      objective_sum += static_cast<double>(total_objective(task, degree_now, l2_now, config.lambda1,
                                                           config.lambda2)) *
                       static_cast<double>(rows.size());
      seen += static_cast<int64_t>(rows.size());

      size_t slot = 0;
      for (MaskedLayer* l : net->masked_layers()) {
        // With L2 on effective weights the hook already folded the decay
        // into dL/dw; otherwise the w~ regularizer is added here.
        Tensor wg = weight_variable_gradient(l->weight_grad(g), l->param);
        if (!l2_effective && config.lambda2 > 0.0f) {
          const float c = 2.0f * config.lambda2;
          for (size_t i = 0; i < wg.data.size(); ++i) wg.data[i] += c * l->param.weight_variable.data[i];
        }
        weight_updater.step(slot, l->param.weight_variable, wg, lr);

        if (!frozen) {
          Tensor mg = config.gradnorm
                          ? l->normalized_mask_gradient(g, config.gradnorm_eps, config.gradnorm_batch_stat)
                          : Tensor(l->mask_grad(g));
          apply_decay_after_norm_inplace(mg, config.lambda1);
          mask_updater.step(slot, l->param.mask_variable, mg, lr);
        }
        ++slot;
      }
      slot = 0;
      for (BatchNorm* bn : net->batch_norms()) {
        bn_updater.step(slot * 2, bn->gamma, g.grad(bn->gamma_id), lr);
        bn_updater.step(slot * 2 + 1, bn->beta, g.grad(bn->beta_id), lr);
        ++slot;
      }
      ++batch_index;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.task_loss = static_cast<float>(task_sum / static_cast<double>(seen));
    rec.objective = static_cast<float>(objective_sum / static_cast<double>(seen));
    rec.degree = connectivity_degree(current_masks(*net));
    rec.sparsity = 1.0 - static_cast<double>(rec.degree) / static_cast<double>(total_masked);
    rec.metric = evaluate_accuracy(*net, data.test);
    history.records.push_back(rec);
  }

  return TrainResult{std::move(net), std::move(history)};
}

Tensor eval_logits(Network& net, const Tensor& images, int batch_size) {
  const int64_t n = images.shape[0];
  Tensor all_logits;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t end = std::min<int64_t>(start + batch_size, n);
    std::vector<int32_t> rows;
    rows.reserve(static_cast<size_t>(end - start));
    for (int64_t i = start; i < end; ++i) rows.push_back(static_cast<int32_t>(i));
    Graph g;
    const NodeId input = g.leaf(gather_rows(images, rows));
    const NodeId logits = net.forward(g, input, /*train=*/false);
    const Tensor& z = g.value(logits);
    if (all_logits.data.empty()) all_logits = Tensor({n, z.shape[1]});
    for (int64_t b = 0; b < end - start; ++b)
      for (int64_t k = 0; k < z.shape[1]; ++k) all_logits.at(start + b, k) = z.at(b, k);
  }
  return all_logits;
}

double evaluate_accuracy(Network& net, const MnistSplit& split, int batch_size) {
  const Tensor logits = eval_logits(net, split.images, batch_size);
  const int64_t n = logits.shape[0], k = logits.shape[1];
  int64_t correct = 0;
  for (int64_t b = 0; b < n; ++b) {
    int best = 0;
    for (int64_t j = 1; j < k; ++j)
      if (logits.at(b, j) > logits.at(b, best)) best = static_cast<int>(j);
    correct += best == split.labels[static_cast<size_t>(b)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double sparsity(const Network& net) {
  const int64_t total = net.masked_weight_count();
  return 1.0 - static_cast<double>(net.surviving_count()) / static_cast<double>(total);
}

std::vector<double> density_profile(const Network& net) {
  std::vector<double> out;
  for (const MaskedLayer* l : net.masked_layers()) {
    int64_t alive = 0;
    for (float v : l->param.mask_variable.data) alive += v > 0.0f ? 1 : 0;
    out.push_back(static_cast<double>(alive) / static_cast<double>(l->param.mask_variable.numel()));
  }
  return out;
}

Tensor input_connection_heatmap(Network& net) {
  if (std::string(net.arch()) != "dense_fc")
    throw std::invalid_argument("input_connection_heatmap requires the dense_fc architecture, got " +
                                std::string(net.arch()));
  auto* dense = dynamic_cast<DenseFcNet*>(&net);
  const int64_t input_dim = dense->input_dim();
  const int64_t side = static_cast<int64_t>(std::lround(std::sqrt(static_cast<double>(input_dim))));
  if (side * side != input_dim)
    throw std::invalid_argument("input dimension " + std::to_string(input_dim) + " is not a square grid");

  Tensor heat({side, side});
  for (const MaskedLayer* l : net.masked_layers()) {
    const auto* affine = dynamic_cast<const MaskedAffine*>(l);
    const int64_t in = affine->in_features;
    for (int64_t o = 0; o < affine->out_features; ++o)
      for (int64_t p = 0; p < input_dim && p < in; ++p)
        heat.data[static_cast<size_t>(p)] +=
            l->param.mask_variable.data[static_cast<size_t>(o * in + p)] > 0.0f ? 1.0f : 0.0f;
  }
  float mx = 0.0f;
  for (float v : heat.data) mx = v > mx ? v : mx;
  if (mx > 0.0f) scale_inplace(heat, 1.0f / mx);
  return heat;
}

namespace {

struct MapfitTask {
  Ste ste;
  bool norm;
  uint64_t seed;
  size_t slot;
};

MapfitSeries run_mapfit_task(const MapfitOptions& opt, const MapfitTask& task) {
  // Benchmark: shared weights, random masks, fixed inputs; its outputs are
  // the fitting target.
  MapfitNet bench(opt.width, opt.depth);
  bench.init_weights(task.seed);
  Rng bench_masks = Rng::derive(task.seed, 0xbea0);
  bench.init_masks_normal(bench_masks);
  const Tensor inputs = gen_mapping_inputs(opt.n_inputs, opt.width, task.seed);

  Tensor target;
  {
    Graph g;
    const NodeId x = g.leaf(inputs);
    const NodeId out = bench.forward(g, x, /*train=*/true);
    target = g.value(out);
  }

  // Same weights, fresh mask variables; only the masks train.
  MapfitNet net(opt.width, opt.depth);
  net.init_weights(task.seed);
  Rng fit_masks = Rng::derive(task.seed, 0xf17);
  net.init_masks_normal(fit_masks);
  net.set_ste(task.ste);

  MapfitSeries series;
  series.ste_name = ste_kind_name(task.ste.kind);
  series.norm = task.norm;
  series.seed = task.seed;
  series.mse.reserve(static_cast<size_t>(opt.steps) + 1);

  // The descent objective sums the squared error over output features
  // (mean over samples); the reported series stays the per-element MSE.
  // Normalized conditions are invariant to the constant, unnormalized ones
  // would otherwise see gradients shrunk by the feature width.
  const float loss_scale = static_cast<float>(opt.width);
  for (int step = 0; step < opt.steps; ++step) {
    Graph g;
    const NodeId x = g.leaf(inputs);
    const NodeId out = net.forward(g, x, /*train=*/true);
    const NodeId t = g.leaf(target);
    const NodeId mse = g.mse(out, t);
    const NodeId loss = g.scale(mse, loss_scale);
    series.mse.push_back(g.value(mse).data[0]);
    g.backward(loss);
    for (MaskedLayer* l : net.masked_layers()) {
      Tensor mg = task.norm ? l->normalized_mask_gradient(g, opt.gradnorm_eps) : Tensor(l->mask_grad(g));
      sgd_step(l->param.mask_variable, mg, opt.lr);
    }
  }
  {
    Graph g;
    const NodeId x = g.leaf(inputs);
    const NodeId out = net.forward(g, x, /*train=*/true);
    const NodeId t = g.leaf(target);
    series.mse.push_back(g.value(g.mse(out, t)).data[0]);
  }
  return series;
}

}  // namespace

std::vector<MapfitSeries> mapfit_experiment(const MapfitOptions& options) {
  std::vector<MapfitTask> tasks;
  std::vector<bool> norms;
  if (options.norm_on) norms.push_back(true);
  if (options.norm_off) norms.push_back(false);
  for (int s = 0; s < options.seeds; ++s)
    for (const Ste& ste : options.kinds)
      for (bool norm : norms)
        tasks.push_back({ste, norm, options.base_seed + static_cast<uint64_t>(s), tasks.size()});

  std::vector<MapfitSeries> results(tasks.size());
  const int jobs = std::max(1, options.jobs);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      results[tasks[i].slot] = run_mapfit_task(options, tasks[i]);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return results;
}

}  // namespace scl
