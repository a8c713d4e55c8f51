#pragma once

#include <vector>

#include "mins/data.hpp"
#include "mins/tensor.hpp"

namespace mins {

/// Scores a row h as query·tanh(h·proj + bias); softmax over rows gives the
/// pooling weights.
struct AdditiveAttentionParams {
  TensorPtr proj;   // [d×a]
  TensorPtr bias;   // [a]
  TensorPtr query;  // [a]
};

struct AttentionHeadParams {
  TensorPtr query;  // [d×dh]
  TensorPtr key;    // [d×dh]
  TensorPtr value;  // [d×dh]
};

struct SelfAttentionParams {
  std::vector<AttentionHeadParams> heads;
  TensorPtr output;  // [d×d], merges the concatenated head outputs
};

struct TopicEncoderParams {
  TensorPtr table;   // [vocab×e]
  TensorPtr weight;  // [d×e]
  TensorPtr bias;    // [d]
};

struct EncoderParams {
  TensorPtr word_embeddings;  // [V×d]
  SelfAttentionParams title_attention;
  AdditiveAttentionParams title_pool;
  SelfAttentionParams abstract_attention;
  AdditiveAttentionParams abstract_pool;
  TopicEncoderParams topic;
  TopicEncoderParams subtopic;
  AdditiveAttentionParams fusion_pool;
};

// Which news parts participate in the fusion (the input-variant ablation
// masks parts here; 'topics' covers topic and subtopic together).
struct PartSelection {
  bool title = true;
  bool abstract = true;
  bool topics = true;
};

// Scaled dot-product multi-head self-attention over a token sequence
// [L×d] -> [L×d]. Masked positions are excluded as keys and produce zero
// output rows.
TensorPtr self_attend_text(const TensorPtr& embedded, const std::vector<bool>& mask,
                           const SelfAttentionParams& params);

// Additive-attention pooling of rows [L×d] -> [d]; masked rows get zero
// weight. Pass mask = nullptr for an unmasked pool.
TensorPtr additive_attention(const TensorPtr& rows, const std::vector<bool>* mask,
                             const AdditiveAttentionParams& params);

// Looked-up topic embedding mapped linearly to the news dimension.
TensorPtr encode_topic(int topic_id, const TopicEncoderParams& params);

// Full news representation: title and abstract through self-attention and
// additive pooling, topic/subtopic through linear encoders, the available
// parts fused by a second additive attention.
TensorPtr encode_news(const EncodedNews& news, const EncoderParams& params,
                      const PartSelection& parts = {});

}  // namespace mins
