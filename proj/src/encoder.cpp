#include "mins/encoder.hpp"

#include <cmath>

#include "mins/error.hpp"
#include "mins/ops.hpp"

namespace mins {

namespace {

bool any_true(const std::vector<bool>& mask) {
  for (bool b : mask)
    if (b) return true;
  return false;
}

}  // namespace

TensorPtr self_attend_text(const TensorPtr& embedded, const std::vector<bool>& mask,
                           const SelfAttentionParams& params) {
  const int d = embedded->cols();
  const int n_heads = static_cast<int>(params.heads.size());
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("self_attend_text: " + std::to_string(n_heads) +
                      " heads do not divide dimension " + std::to_string(d));
  }
  if (!any_true(mask)) throw DegenerateInputError("self_attend_text: all positions masked");

  const int dh = d / n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<TensorPtr> head_outputs;
  head_outputs.reserve(params.heads.size());
  for (const auto& head : params.heads) {
    auto q = matmul(embedded, head.query);             // [L×dh]
    auto k = matmul(embedded, head.key);
    auto v = matmul(embedded, head.value);
    auto scores = scale(matmul(q, transpose(k)), att_scale);  // [L×L]
    auto weights = softmax_rows(scores, &mask);        // masked keys excluded
    head_outputs.push_back(matmul(weights, v));
  }
  auto merged = matmul(concat(head_outputs, 1), params.output);
  return mask_rows(merged, mask);  // masked queries produce zero rows
}

TensorPtr additive_attention(const TensorPtr& rows, const std::vector<bool>* mask,
                             const AdditiveAttentionParams& params) {
  auto hidden = tanh(add_rowwise(matmul(rows, params.proj), params.bias));  // [L×a]
  auto scores = matvec(hidden, params.query);                               // [L]
  auto weights = softmax(scores, mask);
  return weighted_sum(rows, weights);
}

TensorPtr encode_topic(int topic_id, const TopicEncoderParams& params) {
  auto embedded = row(embedding_lookup(params.table, {topic_id}), 0);  // [e]
  return add(matvec(params.weight, embedded), params.bias);
}

TensorPtr encode_news(const EncodedNews& news, const EncoderParams& params,
                      const PartSelection& parts) {
  std::vector<TensorPtr> part_vectors;

  const bool title_live = parts.title && news.has_title && any_true(news.title_mask);
  const bool abstract_live = parts.abstract && news.has_abstract && any_true(news.abstract_mask);
  if (!title_live && !abstract_live) {
    throw DegenerateInputError("encode_news: no usable title or abstract text");
  }

  if (title_live) {
    auto embedded = embedding_lookup(params.word_embeddings, news.title_ids);
    auto contextual = self_attend_text(embedded, news.title_mask, params.title_attention);
    part_vectors.push_back(additive_attention(contextual, &news.title_mask, params.title_pool));
  }
  if (abstract_live) {
    auto embedded = embedding_lookup(params.word_embeddings, news.abstract_ids);
    auto contextual = self_attend_text(embedded, news.abstract_mask, params.abstract_attention);
    part_vectors.push_back(additive_attention(contextual, &news.abstract_mask, params.abstract_pool));
  }
  if (parts.topics) {
    part_vectors.push_back(encode_topic(news.topic_id, params.topic));
    part_vectors.push_back(encode_topic(news.subtopic_id, params.subtopic));
  }

  if (part_vectors.size() == 1) return part_vectors[0];
  return additive_attention(stack_rows(part_vectors), nullptr, params.fusion_pool);
}

}  // namespace mins
