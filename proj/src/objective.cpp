#include "scl/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scl {

float cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy expects NxK logits, got " + logits.shape_str());
  const int64_t batch = logits.shape[0], classes = logits.shape[1];
  if (static_cast<int64_t>(labels.size()) != batch)
    throw std::invalid_argument("cross_entropy label count does not match batch");
  float loss = 0.0f;
  for (int64_t b = 0; b < batch; ++b) {
    const int y = labels[static_cast<size_t>(b)];
    if (y < 0 || y >= classes)
      throw std::invalid_argument("cross_entropy label " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(classes) + ")");
    const float* row = logits.data.data() + b * classes;
    float mx = row[0];
    for (int64_t k = 1; k < classes; ++k) mx = row[k] > mx ? row[k] : mx;
    float denom = 0.0f;
    for (int64_t k = 0; k < classes; ++k) denom += std::exp(row[k] - mx);
    loss += std::log(denom) + mx - row[y];
  }
  return loss / static_cast<float>(batch);
}

int64_t connectivity_degree(const std::vector<Tensor>& masks) {
  int64_t degree = 0;
  for (const Tensor& m : masks)
    for (float v : m.data) {
      if (v != 0.0f && v != 1.0f)
        throw std::invalid_argument("connectivity_degree expects binary masks, got " + std::to_string(v));
      degree += v == 1.0f ? 1 : 0;
    }
  return degree;
}

float l2_penalty(const std::vector<Tensor>& weight_variables) {
  float acc = 0.0f;
  for (const Tensor& w : weight_variables)
    for (float v : w.data) acc += v * v;
  return acc;
}

float total_objective(float task, int64_t degree, float l2, float lambda1, float lambda2) {
  if (lambda1 < 0.0f || lambda2 < 0.0f) throw std::invalid_argument("decay coefficients must be >= 0");
  return task + lambda1 * static_cast<float>(degree) + lambda2 * l2;
}

}  // namespace scl
