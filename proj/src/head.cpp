#include "mins/head.hpp"

#include "mins/error.hpp"
#include "mins/ops.hpp"

namespace mins {

TensorPtr score(const TensorPtr& session, const TensorPtr& candidate) {
  if (session->shape != candidate->shape) {
    throw ShapeError("score: session " + shape_str(session->shape) + " vs candidate " +
                     shape_str(candidate->shape));
  }
  return dot(session, candidate);
}

TensorPtr nll_loss(const std::vector<TensorPtr>& positive_scores,
                   const std::vector<std::vector<TensorPtr>>& negative_scores,
                   LossReduction reduction) {
  if (positive_scores.empty()) {
    throw ConfigError("nll_loss: no positive scores");
  }
  if (negative_scores.size() != positive_scores.size()) {
    throw ConfigError("nll_loss: " + std::to_string(positive_scores.size()) +
                      " positives but " + std::to_string(negative_scores.size()) +
                      " negative groups");
  }
  TensorPtr total;
  for (std::size_t j = 0; j < positive_scores.size(); ++j) {
    const auto& negs = negative_scores[j];
    if (negs.empty()) throw ConfigError("nll_loss: a positive has no negative samples (K=0)");
    std::vector<TensorPtr> group;
    group.reserve(negs.size() + 1);
    group.push_back(positive_scores[j]);
    for (const auto& n : negs) group.push_back(n);
    auto term = sub(logsumexp(concat(group, 0)), positive_scores[j]);
    total = total ? add(total, term) : term;
  }
  if (reduction == LossReduction::Mean) {
    total = scale(total, 1.0 / static_cast<double>(positive_scores.size()));
  }
  return total;
}

}  // namespace mins
