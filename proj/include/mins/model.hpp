#pragma once

#include <string>
#include <vector>

#include "mins/data.hpp"
#include "mins/encoder.hpp"
#include "mins/pin.hpp"
#include "mins/rng.hpp"
#include "mins/tensor.hpp"

namespace mins {

struct ModelDims {
  int vocab = 0;           // word vocabulary size V
  int dim = 300;           // news/session dimension d
  int encoder_heads = 15;  // self-attention heads in the news encoder
  int channels = 6;        // interest channels k (= detector heads)
  int topic_vocab = 0;
  int subtopic_vocab = 0;
  int topic_dim = 100;     // topic/subtopic embedding width before projection
  int attention_dim = 0;   // additive-attention hidden width; 0 means dim

  int attn_dim() const { return attention_dim > 0 ? attention_dim : dim; }
  void validate() const;  // ConfigError on a non-divisor head/channel count
};

/// Every trainable tensor of the model. named() enumerates them in a fixed
/// order (word table, title attention + pool, abstract attention + pool,
/// topic, subtopic, fusion pool, detector heads, GRU channels, channel
/// fusion); each tensor carries its dotted path as its name.
struct ModelParams {
  ModelDims dims;
  EncoderParams encoder;
  PinParams pin;

  std::vector<TensorPtr> named() const;
  void zero_grad();
  ModelParams clone() const;  // deep copy, shares nothing
};

// Fresh parameters: the word table is taken as given (pretrained or random),
// projections and attention parameters are uniform(-r, r) with
// r = sqrt(6 / (fan_in + fan_out)), biases start at zero, topic/subtopic
// tables are uniform(-0.1, 0.1) with zero padding rows.
ModelParams init_params(const ModelDims& dims, const TensorPtr& word_embeddings, Rng& rng);

// Candidate/news representation for one encoded news item.
TensorPtr news_vector(const ModelParams& model, const EncodedNews& news,
                      const PartSelection& parts = {});

// Session vector for one example's history; the zero vector for an empty
// (all-masked) history.
TensorPtr example_session(const ModelParams& model, const EncodedCorpus& corpus,
                          const SessionExample& example, const PartSelection& parts = {});

// Raw candidate scores for one example, pure forward (no taping needed by
// the caller). Used by evaluation and prediction.
std::vector<double> score_example(const ModelParams& model, const EncodedCorpus& corpus,
                                  const SessionExample& example, const PartSelection& parts = {});

}  // namespace mins
