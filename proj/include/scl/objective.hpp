#pragma once

#include <vector>

#include "scl/tensor.hpp"

namespace scl {

// Training objective: task loss + lambda1 * connectivity degree +
// lambda2 * sum of squared weight variables.

// Mean over the batch of -log softmax(logits)[label], max-stabilized.
float cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Total count of surviving connections over all binary masks.
int64_t connectivity_degree(const std::vector<Tensor>& masks);

// Sum of squares over all weight variables, including zero-masked ones.
float l2_penalty(const std::vector<Tensor>& weight_variables);

float total_objective(float task, int64_t degree, float l2, float lambda1, float lambda2);

}  // namespace scl
