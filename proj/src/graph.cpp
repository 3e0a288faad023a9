#include "scl/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scl {

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.data.empty()) {
    n.grad = g;
  } else {
    add_inplace(n.grad, g);
  }
}

void Graph::set_hook(NodeId id, BackwardFn hook) { nodes_[static_cast<size_t>(id)].hook = std::move(hook); }

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb))
    throw std::invalid_argument("add shape mismatch: " + va.shape_str() + " vs " + vb.shape_str());
  Node n;
  n.op = "add";
  n.value = va;
  add_inplace(n.value, vb);
  n.inputs = {a, b};
  n.backward = [a, b](Graph& g, Node& self) {
    g.accumulate(a, self.grad);
    g.accumulate(b, self.grad);
  };
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  Node n;
  n.op = "mul";
  n.value = hadamard(value(a), value(b));
  n.inputs = {a, b};
  n.backward = [a, b](Graph& g, Node& self) {
    g.accumulate(a, hadamard(self.grad, g.value(b)));
    g.accumulate(b, hadamard(self.grad, g.value(a)));
  };
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, float s) {
  Node n;
  n.op = "scale";
  n.value = value(a);
  scale_inplace(n.value, s);
  n.inputs = {a};
  n.backward = [a, s](Graph& g, Node& self) {
    Tensor gs = self.grad;
    scale_inplace(gs, s);
    g.accumulate(a, gs);
  };
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  const Tensor& vx = value(x);
  Node n;
  n.op = "relu";
  n.value = Tensor(vx.shape);
  for (size_t i = 0; i < vx.data.size(); ++i) n.value.data[i] = vx.data[i] > 0.0f ? vx.data[i] : 0.0f;
  n.inputs = {x};
  n.backward = [x](Graph& g, Node& self) {
    const Tensor& vx2 = g.value(x);
    Tensor gx(vx2.shape);
    for (size_t i = 0; i < vx2.data.size(); ++i) gx.data[i] = vx2.data[i] > 0.0f ? self.grad.data[i] : 0.0f;
    g.accumulate(x, gx);
  };
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = "matmul";
  n.value = scl::matmul(value(a), value(b));
  n.inputs = {a, b};
  n.backward = [a, b](Graph& g, Node& self) {
    g.accumulate(a, scl::matmul(self.grad, scl::transpose(g.value(b))));
    g.accumulate(b, scl::matmul(scl::transpose(g.value(a)), self.grad));
  };
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  Node n;
  n.op = "transpose";
  n.value = scl::transpose(value(a));
  n.inputs = {a};
  n.backward = [a](Graph& g, Node& self) { g.accumulate(a, scl::transpose(self.grad)); };
  return push(std::move(n));
}

NodeId Graph::concat_cols(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.shape[0] != vb.shape[0])
    throw std::invalid_argument("concat_cols expects matrices with equal rows, got " + va.shape_str() + " and " +
                                vb.shape_str());
  const int64_t rows = va.shape[0], ca = va.shape[1], cb = vb.shape[1];
  Node n;
  n.op = "concat";
  n.value = Tensor({rows, ca + cb});
  for (int64_t r = 0; r < rows; ++r) {
    float* out = n.value.data.data() + r * (ca + cb);
    const float* pa = va.data.data() + r * ca;
    const float* pb = vb.data.data() + r * cb;
    for (int64_t j = 0; j < ca; ++j) out[j] = pa[j];
    for (int64_t j = 0; j < cb; ++j) out[ca + j] = pb[j];
  }
  n.inputs = {a, b};
  n.backward = [a, b, rows, ca, cb](Graph& g, Node& self) {
    Tensor ga({rows, ca});
    Tensor gb({rows, cb});
    for (int64_t r = 0; r < rows; ++r) {
      const float* src = self.grad.data.data() + r * (ca + cb);
      for (int64_t j = 0; j < ca; ++j) ga.data[static_cast<size_t>(r * ca + j)] = src[j];
      for (int64_t j = 0; j < cb; ++j) gb.data[static_cast<size_t>(r * cb + j)] = src[ca + j];
    }
    g.accumulate(a, ga);
    g.accumulate(b, gb);
  };
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  const Tensor& vx = value(x);
  float acc = 0.0f;
  for (float v : vx.data) acc += v;
  Node n;
  n.op = "sum";
  n.value = Tensor({1}, {acc});
  n.inputs = {x};
  n.backward = [x](Graph& g, Node& self) {
    g.accumulate(x, Tensor::full(g.value(x).shape, self.grad.data[0]));
  };
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId input, NodeId kernel, int stride, int padding) {
  Node n;
  n.op = "conv2d";
  n.value = scl::conv2d(value(input), value(kernel), stride, padding);
  n.inputs = {input, kernel};
  n.backward = [input, kernel, stride, padding](Graph& g, Node& self) {
    Tensor gi, gk;
    conv2d_backward(g.value(input), g.value(kernel), stride, padding, self.grad, gi, gk);
    g.accumulate(input, gi);
    g.accumulate(kernel, gk);
  };
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId logits, std::vector<int> labels) {
  const Tensor& z = value(logits);
  if (z.rank() != 2) throw std::invalid_argument("cross_entropy expects NxK logits, got " + z.shape_str());
  const int64_t batch = z.shape[0], classes = z.shape[1];
  if (static_cast<int64_t>(labels.size()) != batch)
    throw std::invalid_argument("cross_entropy label count " + std::to_string(labels.size()) +
                                " does not match batch " + std::to_string(batch));
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw std::invalid_argument("cross_entropy label " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(classes) + ")");
  Tensor probs({batch, classes});
  float loss = 0.0f;
  for (int64_t b = 0; b < batch; ++b) {
    const float* row = z.data.data() + b * classes;
    float mx = row[0];
    for (int64_t k = 1; k < classes; ++k) mx = row[k] > mx ? row[k] : mx;
    float denom = 0.0f;
    for (int64_t k = 0; k < classes; ++k) denom += std::exp(row[k] - mx);
    const float log_denom = std::log(denom);
    for (int64_t k = 0; k < classes; ++k)
      probs.data[static_cast<size_t>(b * classes + k)] = std::exp(row[k] - mx) / denom;
    loss += log_denom + mx - row[labels[static_cast<size_t>(b)]];
  }
  loss /= static_cast<float>(batch);

  Node n;
  n.op = "cross_entropy";
  n.value = Tensor({1}, {loss});
  n.inputs = {logits};
  n.backward = [logits, probs = std::move(probs), labels = std::move(labels), batch, classes](Graph& g, Node& self) {
    const float s = self.grad.data[0] / static_cast<float>(batch);
    Tensor gz({batch, classes});
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t k = 0; k < classes; ++k) {
        const size_t i = static_cast<size_t>(b * classes + k);
        gz.data[i] = s * (probs.data[i] - (labels[static_cast<size_t>(b)] == k ? 1.0f : 0.0f));
      }
    g.accumulate(logits, gz);
  };
  return push(std::move(n));
}

NodeId Graph::mse(NodeId pred, NodeId target) {
  const Tensor& p = value(pred);
  const Tensor& t = value(target);
  if (!p.same_shape(t))
    throw std::invalid_argument("mse shape mismatch: " + p.shape_str() + " vs " + t.shape_str());
  float acc = 0.0f;
  for (size_t i = 0; i < p.data.size(); ++i) {
    const float d = p.data[i] - t.data[i];
    acc += d * d;
  }
  acc /= static_cast<float>(p.numel());
  Node n;
  n.op = "mse";
  n.value = Tensor({1}, {acc});
  n.inputs = {pred, target};
  n.backward = [pred, target](Graph& g, Node& self) {
    const Tensor& p2 = g.value(pred);
    const Tensor& t2 = g.value(target);
    const float s = self.grad.data[0] * 2.0f / static_cast<float>(p2.numel());
    Tensor gp(p2.shape);
    for (size_t i = 0; i < p2.data.size(); ++i) gp.data[i] = s * (p2.data[i] - t2.data[i]);
    g.accumulate(pred, gp);
    Tensor gt = gp;
    scale_inplace(gt, -1.0f);
    g.accumulate(target, gt);
  };
  return push(std::move(n));
}

NodeId Graph::masked_weight(NodeId w_tilde, NodeId m_tilde) {
  const Tensor& w = value(w_tilde);
  const Tensor& m = value(m_tilde);
  if (!w.same_shape(m))
    throw std::invalid_argument("masked_weight shape mismatch: " + w.shape_str() + " vs " + m.shape_str());
  Node n;
  n.op = "masked_weight";
  n.value = Tensor(w.shape);
  for (size_t i = 0; i < w.data.size(); ++i) n.value.data[i] = m.data[i] > 0.0f ? w.data[i] : 0.0f;
  n.inputs = {w_tilde, m_tilde};
  // Plain chain rule: grad reaches w_tilde through the binary mask and never
  // reaches m_tilde (the unit step has zero derivative almost everywhere).
  n.backward = [w_tilde, m_tilde](Graph& g, Node& self) {
    const Tensor& m2 = g.value(m_tilde);
    Tensor gw(m2.shape);
    for (size_t i = 0; i < m2.data.size(); ++i) gw.data[i] = m2.data[i] > 0.0f ? self.grad.data[i] : 0.0f;
    g.accumulate(w_tilde, gw);
  };
  return push(std::move(n));
}

NodeId Graph::custom(Tensor value, std::vector<NodeId> inputs, BackwardFn backward, const char* op) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  return push(std::move(n));
}

void Graph::backward(NodeId loss) {
  Node& ln = nodes_[static_cast<size_t>(loss)];
  if (ln.value.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " + ln.value.shape_str());

  std::vector<char> needed(nodes_.size(), 0);
  std::vector<NodeId> stack = {loss};
  needed[static_cast<size_t>(loss)] = 1;
  while (!stack.empty()) {
    const NodeId cur = stack.back();
    stack.pop_back();
    for (NodeId in : nodes_[static_cast<size_t>(cur)].inputs) {
      if (!needed[static_cast<size_t>(in)]) {
        needed[static_cast<size_t>(in)] = 1;
        stack.push_back(in);
      }
    }
  }

  ln.grad = Tensor({1}, {1.0f});
  for (NodeId i = loss; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!needed[static_cast<size_t>(i)] || n.grad.data.empty()) continue;
    const BackwardFn& fn = n.hook ? n.hook : n.backward;
    if (fn) fn(*this, n);
  }

  // Every node gets a defined gradient, zero where the loss does not depend
  // on it.
  for (Node& n : nodes_)
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, float h) {
  Tensor g(x.shape);
  Tensor probe = x;
  for (size_t i = 0; i < x.data.size(); ++i) {
    const float orig = probe.data[i];
    const float xp = orig + h;
    const float xm = orig - h;
    probe.data[i] = xp;
    const double fp = f(probe);
    probe.data[i] = xm;
    const double fm = f(probe);
    probe.data[i] = orig;
    g.data[i] = static_cast<float>((fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm)));
  }
  return g;
}

}  // namespace scl
