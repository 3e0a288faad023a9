#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "scl/masking.hpp"
#include "scl/rng.hpp"

using namespace scl;

TEST_SUITE("masking") {

TEST_CASE("unit step: boundary belongs to zero") {
  Tensor m({4}, {0.0f, 0.7f, -3.2f, -1e-9f});
  Tensor h = unit_step(m);
  CHECK(h.data == std::vector<float>{0.0f, 1.0f, 0.0f, 0.0f});
}

TEST_CASE("unit step output is binary for random input") {
  Rng rng(2);
  Tensor m = rng.normal_tensor({100});
  Tensor h = unit_step(m);
  for (size_t i = 0; i < h.data.size(); ++i) {
    CHECK((h.data[i] == 0.0f || h.data[i] == 1.0f));
    CHECK(h.data[i] == (m.data[i] > 0.0f ? 1.0f : 0.0f));
  }
}

TEST_CASE("effective weight") {
  MaskedParameter p(Tensor({3}, {2.0f, -3.0f, 0.5f}), Tensor({3}, {1.0f, -1.0f, 0.0f}));
  CHECK(effective_weight(p).data == std::vector<float>{2.0f, 0.0f, 0.0f});

  MaskedParameter all_pos(Tensor({3}, {2.0f, -3.0f, 0.5f}), Tensor::full({3}, 0.1f));
  CHECK(effective_weight(all_pos).data == all_pos.weight_variable.data);

  Rng rng(4);
  MaskedParameter r(rng.normal_tensor({50}), rng.normal_tensor({50}));
  Tensor w = effective_weight(r);
  for (size_t i = 0; i < w.data.size(); ++i) {
    if (r.mask_variable.data[i] <= 0.0f)
      CHECK(w.data[i] == 0.0f);
    else
      CHECK(w.data[i] == r.weight_variable.data[i]);
  }
}

TEST_CASE("ste proxy gradients") {
  Tensor xs({5}, {-2.0f, -0.5f, 0.0f, 0.5f, 2.0f});

  Tensor ident = ste_proxy_gradient(Ste::identity(), xs);
  for (float v : ident.data) CHECK(v == 1.0f);

  CHECK(ste_proxy_gradient(Ste::softplus(), Tensor({1}, {0.0f})).data[0] == doctest::Approx(0.5f));
  CHECK(ste_proxy_gradient(Ste::clipped_relu(1.0f), Tensor({1}, {2.0f})).data[0] == 0.0f);
  CHECK(ste_proxy_gradient(Ste::leaky_relu(0.01f), Tensor({1}, {-2.0f})).data[0] == doctest::Approx(0.01f));

  Tensor relu = ste_proxy_gradient(Ste::relu(), xs);
  CHECK(relu.data == std::vector<float>{0.0f, 0.0f, 0.0f, 1.0f, 1.0f});

  Tensor crelu = ste_proxy_gradient(Ste::clipped_relu(1.0f), xs);
  CHECK(crelu.data == std::vector<float>{0.0f, 0.0f, 0.0f, 1.0f, 0.0f});
}

TEST_CASE("ste alpha validation") {
  CHECK_THROWS_AS(ste_proxy_gradient(Ste::clipped_relu(0.0f), Tensor({1})), std::invalid_argument);
  CHECK_THROWS_AS(ste_proxy_gradient(Ste::leaky_relu(1.5f), Tensor({1})), std::invalid_argument);
  CHECK_THROWS_AS(ste_proxy_gradient(Ste::leaky_relu(0.0f), Tensor({1})), std::invalid_argument);
}

TEST_CASE("weight variable gradient drops the mask factor") {
  MaskedParameter p(Tensor({3}, {5.0f, 6.0f, 7.0f}), Tensor({3}, {1.0f, -1.0f, 0.5f}));
  Tensor grad_w({3}, {1.0f, 2.0f, 3.0f});
  CHECK(weight_variable_gradient(grad_w, p).data == grad_w.data);

  Tensor zeros({3});
  CHECK(weight_variable_gradient(zeros, p).data == zeros.data);
  CHECK_THROWS_AS(weight_variable_gradient(Tensor({2}), p), std::invalid_argument);
}

TEST_CASE("redefined gradient differs from plain chain rule exactly on zero-mask positions") {
  Rng rng(9);
  MaskedParameter p(rng.normal_tensor({40}), rng.normal_tensor({40}));
  Tensor grad_w = rng.normal_tensor({40});
  Tensor redefined = weight_variable_gradient(grad_w, p);
  Tensor chain = hadamard(grad_w, unit_step(p.mask_variable));  // plain chain rule
  for (size_t i = 0; i < grad_w.data.size(); ++i) {
    if (p.mask_variable.data[i] > 0.0f)
      CHECK(redefined.data[i] == chain.data[i]);
    else {
      CHECK(chain.data[i] == 0.0f);
      CHECK(redefined.data[i] == grad_w.data[i]);
    }
  }
}

TEST_CASE("mask variable gradient") {
  MaskedParameter p(Tensor({2}, {2.0f, -3.0f}), Tensor({2}, {1.0f, 1.0f}));
  Tensor g = mask_variable_gradient(Tensor({2}, {1.0f, 1.0f}), p, Ste::identity());
  CHECK(g.data == std::vector<float>{2.0f, -3.0f});

  MaskedParameter zero_w(Tensor({2}), Tensor({2}, {1.0f, -1.0f}));
  Tensor g2 = mask_variable_gradient(Tensor({2}, {9.0f, -9.0f}), zero_w, Ste::identity());
  CHECK(g2.data == std::vector<float>{0.0f, 0.0f});

  MaskedParameter relu_case(Tensor({2}, {1.0f, 1.0f}), Tensor({2}, {-1.0f, 1.0f}));
  Tensor g3 = mask_variable_gradient(Tensor({2}, {5.0f, 5.0f}), relu_case, Ste::relu());
  CHECK(g3.data == std::vector<float>{0.0f, 5.0f});
}

TEST_CASE("identity STE mask gradient equals grad_w (.) w~ exactly") {
  Rng rng(13);
  MaskedParameter p(rng.normal_tensor({64}), rng.normal_tensor({64}));
  Tensor grad_w = rng.normal_tensor({64});
  Tensor g = mask_variable_gradient(grad_w, p, Ste::identity());
  Tensor expect = hadamard(grad_w, p.weight_variable);
  CHECK(g.data == expect.data);
}

TEST_CASE("toy mask loss gradient: identity table") {
  auto grad = [](float m, float target) {
    return toy_mask_loss_gradient(Tensor({1}, {m}), Tensor({1}, {target}), Ste::identity()).data[0];
  };
  CHECK(grad(0.5f, 1.0f) == 0.0f);
  CHECK(grad(-0.5f, 1.0f) == -1.0f);
  CHECK(grad(0.5f, 0.0f) == 1.0f);
  CHECK_THROWS_AS(grad(0.5f, 0.3f), std::invalid_argument);
}

TEST_CASE("toy mask loss with other proxies follows Eq-pattern") {
  // proxy(m) * residual, residual in {0,-1,+1}
  const float g = toy_mask_loss_gradient(Tensor({1}, {-0.5f}), Tensor({1}, {1.0f}), Ste::softplus()).data[0];
  const float logistic = 1.0f / (1.0f + std::exp(0.5f));
  CHECK(g == doctest::Approx(-logistic));
}

static int steps_to_converge(Ste ste, float start, float target, float lr, int max_steps) {
  Tensor m({1}, {start});
  Tensor t({1}, {target});
  for (int i = 0; i < max_steps; ++i) {
    if ((m.data[0] > 0.0f ? 1.0f : 0.0f) == target) return i;
    Tensor g = toy_mask_loss_gradient(m, t, ste);
    m.data[0] -= lr * g.data[0];
  }
  return (m.data[0] > 0.0f ? 1.0f : 0.0f) == target ? max_steps : -1;
}

TEST_CASE("STE convergence principle on the toy loss") {
  // Positive-proxy STEs reach the optimum within 10/lr steps from any start
  // in [-2, 2]; Clipped ReLU never escapes its dead zone.
  const float lr = 0.1f;
  const int budget = static_cast<int>(10.0f / lr);
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const float start = 4.0f * rng.uniform() - 2.0f;
    const float target = (rng.next_u64() & 1) ? 1.0f : 0.0f;
    for (const Ste& ste : {Ste::leaky_relu(0.25f), Ste::softplus(), Ste::identity()}) {
      const int steps = steps_to_converge(ste, start, target, lr, budget);
      CHECK(steps >= 0);
    }
  }
  // Dead zone: m0 > alpha with target 0 never changes.
  for (int trial = 0; trial < 50; ++trial) {
    const float start = 1.0f + 3.0f * rng.uniform();
    CHECK(steps_to_converge(Ste::clipped_relu(1.0f), start, 0.0f, lr, budget) == -1);
  }
}

TEST_CASE("extract_sparse basics") {
  MaskedParameter dead(Tensor({4}, {1, 2, 3, 4}), Tensor::full({4}, -1.0f));
  SparseWeights s1 = extract_sparse(dead);
  CHECK(s1.indices.empty());
  CHECK(s1.density() == 0.0);

  MaskedParameter alive(Tensor({4}, {1, 2, 3, 4}), Tensor::full({4}, 1.0f));
  SparseWeights s2 = extract_sparse(alive);
  CHECK(s2.indices == std::vector<int64_t>{0, 1, 2, 3});
  CHECK(s2.values == std::vector<float>{1, 2, 3, 4});
  CHECK(s2.density() == 1.0);
}

TEST_CASE("extract then densify is the identity on the masked weights") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    MaskedParameter p(rng.normal_tensor({6, 7}), rng.normal_tensor({6, 7}));
    Tensor dense = densify(extract_sparse(p));
    Tensor expect = effective_weight(p);
    CHECK(dense.data == expect.data);
    SparseWeights s = extract_sparse(p);
    for (size_t i = 1; i < s.indices.size(); ++i) CHECK(s.indices[i] > s.indices[i - 1]);
  }
}

}  // TEST_SUITE
