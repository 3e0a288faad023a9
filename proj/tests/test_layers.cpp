#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "scl/layers.hpp"
#include "scl/rng.hpp"

using namespace scl;

TEST_SUITE("layers") {

TEST_CASE("he_init statistics and determinism") {
  Rng rng(5);
  Tensor small = he_init({100000}, 2, rng);
  double sum = 0.0, sq = 0.0;
  for (float v : small.data) sum += v;
  const double mean = sum / 1e5;
  for (float v : small.data) sq += (v - mean) * (v - mean);
  const double var = sq / 1e5;
  CHECK(var > 0.97);
  CHECK(var < 1.03);

  Rng a(9), b(9);
  CHECK(he_init({50, 50}, 7, a).data == he_init({50, 50}, 7, b).data);

  Rng rng2(13);
  Tensor wide = he_init({100000}, 800, rng2);
  double sq2 = 0.0;
  for (float v : wide.data) sq2 += static_cast<double>(v) * v;
  const double stddev = std::sqrt(sq2 / 1e5);
  CHECK(stddev == doctest::Approx(0.05).epsilon(0.02));

  CHECK_THROWS_AS(he_init({2}, 0, rng2), std::invalid_argument);
}

TEST_CASE("dense_fc architecture shapes and parameter count") {
  DenseFcNet net = build_dense_fc();
  CHECK(net.masked_weight_count() == 117152);
  CHECK(net.block(0).param.weight_variable.shape == std::vector<int64_t>{8, 784});
  CHECK(net.block(15).param.weight_variable.shape == std::vector<int64_t>{8, 904});
  CHECK(net.classifier().param.weight_variable.shape == std::vector<int64_t>{10, 912});
}

TEST_CASE("mapfit architecture and determinism") {
  MapfitNet net = build_mapfit(64, 3, 7);
  CHECK(net.masked_weight_count() == 12288);

  Rng masks(77);
  net.init_masks_normal(masks);
  MapfitNet net2 = build_mapfit(64, 3, 7);
  Rng masks2(77);
  net2.init_masks_normal(masks2);

  Tensor x = Rng(123).normal_tensor({16, 64});
  Graph g1, g2;
  NodeId o1 = net.forward(g1, g1.leaf(x), true);
  NodeId o2 = net2.forward(g2, g2.leaf(x), true);
  CHECK(g1.value(o1).data == g2.value(o2).data);
}

TEST_CASE("batch norm forward: constant column collapses to beta") {
  BatchNorm bn(3);
  bn.beta = Tensor({3}, {0.5f, -0.25f, 2.0f});
  Tensor x({4, 3});
  for (int64_t b = 0; b < 4; ++b) {
    x.at(b, 0) = 7.0f;
    x.at(b, 1) = -3.0f;
    x.at(b, 2) = 0.0f;
  }
  Graph g;
  NodeId y = bn.forward(g, g.leaf(x), true);
  for (int64_t b = 0; b < 4; ++b)
    for (int64_t j = 0; j < 3; ++j) CHECK(g.value(y).at(b, j) == doctest::Approx(bn.beta.at(j)).epsilon(1e-6));
}

TEST_CASE("batch norm normalizes batch statistics") {
  Rng rng(31);
  BatchNorm bn(8);
  Tensor x = rng.normal_tensor({256, 8}, 3.0f, 2.0f);
  Graph g;
  NodeId y = bn.forward(g, g.leaf(x), true);
  const Tensor& v = g.value(y);
  for (int64_t j = 0; j < 8; ++j) {
    double mean = 0.0, var = 0.0;
    for (int64_t b = 0; b < 256; ++b) mean += v.at(b, j);
    mean /= 256.0;
    for (int64_t b = 0; b < 256; ++b) var += (v.at(b, j) - mean) * (v.at(b, j) - mean);
    var /= 256.0;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("standardized input passes through with unit gamma") {
  Rng rng(37);
  BatchNorm bn(4);
  Tensor raw = rng.normal_tensor({64, 4});
  // pre-standardize per column so BN's own transform is near identity
  for (int64_t j = 0; j < 4; ++j) {
    double mean = 0.0;
    for (int64_t b = 0; b < 64; ++b) mean += raw.at(b, j);
    mean /= 64.0;
    double var = 0.0;
    for (int64_t b = 0; b < 64; ++b) var += (raw.at(b, j) - mean) * (raw.at(b, j) - mean);
    var /= 64.0;
    for (int64_t b = 0; b < 64; ++b) raw.at(b, j) = static_cast<float>((raw.at(b, j) - mean) / std::sqrt(var));
  }
  Graph g;
  NodeId y = bn.forward(g, g.leaf(raw), true);
  for (int64_t b = 0; b < 64; ++b)
    for (int64_t j = 0; j < 4; ++j) CHECK(g.value(y).at(b, j) == doctest::Approx(raw.at(b, j)).epsilon(1e-3));
}

TEST_CASE("batch norm rejects feature mismatch") {
  BatchNorm bn(3);
  Graph g;
  CHECK_THROWS_AS(bn.forward(g, g.leaf(Tensor({4, 5})), true), std::invalid_argument);
}

TEST_CASE("batch norm backward matches central differences") {
  Rng rng(41);
  Tensor x0 = rng.normal_tensor({6, 3});
  Tensor gamma0 = rng.normal_tensor({3}, 1.0f, 0.2f);
  Tensor beta0 = rng.normal_tensor({3}, 0.0f, 0.2f);

  auto loss_for = [&](const Tensor& x, const Tensor& gamma, const Tensor& beta, bool train) {
    // squared sum keeps the objective sensitive to every element
    const oracles::DMat gm = oracles::to_dmat(gamma);
    const oracles::DMat bm = oracles::to_dmat(beta);
    if (train) return oracles::sum_square(oracles::batchnorm_train(oracles::to_dmat(x), gm, bm, 1e-5));
    oracles::DMat mean(3, 1), var(3, 1);
    for (int j = 0; j < 3; ++j) {
      mean.v[static_cast<size_t>(j)] = 0.0;  // fresh running statistics
      var.v[static_cast<size_t>(j)] = 1.0;
    }
    return oracles::sum_square(oracles::batchnorm_eval(oracles::to_dmat(x), gm, bm, mean, var, 1e-5));
  };

  for (bool train : {true, false}) {
    BatchNorm bn(3);
    bn.gamma = gamma0;
    bn.beta = beta0;
    Graph g;
    NodeId x = g.leaf(x0);
    NodeId y = bn.forward(g, x, train);
    NodeId loss = g.sum(g.mul(y, y));
    g.backward(loss);

    Tensor fd_x = finite_difference_gradient(
        [&](const Tensor& probe) { return loss_for(probe, gamma0, beta0, train); }, x0, 1e-2f);
    CHECK(oracles::all_close(g.grad(x), fd_x, 1e-3f, 1e-4f));

    Tensor fd_gamma = finite_difference_gradient(
        [&](const Tensor& probe) { return loss_for(x0, probe, beta0, train); }, gamma0, 1e-2f);
    CHECK(oracles::all_close(g.grad(bn.gamma_id), fd_gamma, 1e-3f, 1e-4f));

    Tensor fd_beta = finite_difference_gradient(
        [&](const Tensor& probe) { return loss_for(x0, gamma0, probe, train); }, beta0, 1e-2f);
    CHECK(oracles::all_close(g.grad(bn.beta_id), fd_beta, 1e-3f, 1e-4f));
  }
}

TEST_CASE("all-ones masks make a masked affine identical to a plain one") {
  Rng rng(47);
  MaskedAffine layer(3, 5);
  layer.param.weight_variable = rng.normal_tensor({3, 5});
  Tensor x = rng.normal_tensor({4, 5});

  Graph g;
  NodeId logits = layer.forward(g, g.leaf(x));
  NodeId loss = g.cross_entropy(logits, {0, 1, 2, 0});
  g.backward(loss);

  Graph plain;
  NodeId w = plain.leaf(layer.param.weight_variable);
  NodeId logits2 = plain.matmul(plain.leaf(x), plain.transpose(w));
  NodeId loss2 = plain.cross_entropy(logits2, {0, 1, 2, 0});
  plain.backward(loss2);

  CHECK(g.value(logits).data == plain.value(logits2).data);
  CHECK(g.value(loss).data == plain.value(loss2).data);
  CHECK(layer.weight_grad(g).data == plain.grad(w).data);
}

TEST_CASE("zero mask silences the forward path but not the weight gradient") {
  Rng rng(53);
  MaskedAffine layer(2, 3);
  layer.param.weight_variable = rng.normal_tensor({2, 3});
  layer.param.mask_variable = Tensor::full({2, 3}, 1.0f);
  layer.param.mask_variable.at(0, 1) = -1.0f;  // prune one connection

  Tensor x = rng.normal_tensor({5, 3});
  Graph g;
  NodeId y = layer.forward(g, g.leaf(x));
  NodeId loss = g.sum(g.mul(y, y));
  g.backward(loss);

  // forward ignores the pruned weight
  const Tensor weff = g.value(layer.weff_id);
  CHECK(weff.at(0, 1) == 0.0f);

  // Eq. 13: gradient on w~ equals the gradient on w, including the pruned slot
  CHECK(layer.weight_grad(g).data == g.grad(layer.weff_id).data);
  CHECK(layer.weight_grad(g).at(0, 1) != 0.0f);
}

TEST_CASE("masked conv layer applies the same hook contract") {
  Rng rng(59);
  MaskedConv2D layer(2, 1, 3, 3, 1, 1);
  layer.param.weight_variable = rng.normal_tensor({2, 1, 3, 3});
  layer.param.mask_variable = rng.normal_tensor({2, 1, 3, 3});

  Tensor x = rng.normal_tensor({2, 1, 4, 4});
  Graph g;
  NodeId y = layer.forward(g, g.leaf(x));
  NodeId loss = g.sum(g.mul(y, y));
  g.backward(loss);

  CHECK(layer.weight_grad(g).data == g.grad(layer.weff_id).data);
  Tensor expect_mask_grad = hadamard(g.grad(layer.weff_id), layer.param.weight_variable);
  CHECK(layer.mask_grad(g).data == expect_mask_grad.data);
  CHECK(layer.feature_count() == 2);
  CHECK(layer.feature_size() == 9);
}

}  // TEST_SUITE
