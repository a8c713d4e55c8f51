#pragma once

#include <vector>

#include "mins/tensor.hpp"

namespace mins {

// Click score: raw inner product of session and candidate vectors. Ranking
// uses the raw score; the loss below applies the softmax across candidates.
TensorPtr score(const TensorPtr& session, const TensorPtr& candidate);

enum class LossReduction { Sum, Mean };

// Negative-sampling log-likelihood: each positive score competes against its
// K negatives in a (K+1)-way softmax,
//   L = -Σ_j log( exp(y⁺_j) / (exp(y⁺_j) + Σ_n exp(y⁻_{j,n})) ),
// computed through log-sum-exp. Sum reduction by default; Mean divides by
// the number of positives.
TensorPtr nll_loss(const std::vector<TensorPtr>& positive_scores,
                   const std::vector<std::vector<TensorPtr>>& negative_scores,
                   LossReduction reduction = LossReduction::Sum);

}  // namespace mins
