#include "mins/model.hpp"

#include <cmath>

#include "mins/error.hpp"
#include "mins/head.hpp"
#include "mins/ops.hpp"

namespace mins {

void ModelDims::validate() const {
  if (vocab < 2) throw ConfigError("model dims: word vocabulary too small");
  if (dim <= 0) throw ConfigError("model dims: dimension must be positive");
  if (encoder_heads <= 0 || dim % encoder_heads != 0) {
    throw ConfigError("model dims: encoder heads " + std::to_string(encoder_heads) +
                      " must divide dimension " + std::to_string(dim));
  }
  if (channels <= 0 || dim % channels != 0) {
    throw ConfigError("model dims: channel count " + std::to_string(channels) +
                      " must divide dimension " + std::to_string(dim));
  }
  if (topic_vocab < 2 || subtopic_vocab < 2) {
    throw ConfigError("model dims: topic vocabularies too small");
  }
  if (topic_dim <= 0) throw ConfigError("model dims: topic dim must be positive");
}

namespace {

void collect_attention(const SelfAttentionParams& p, std::vector<TensorPtr>& out) {
  for (const auto& head : p.heads) {
    out.push_back(head.query);
    out.push_back(head.key);
    out.push_back(head.value);
  }
  out.push_back(p.output);
}

void collect_pool(const AdditiveAttentionParams& p, std::vector<TensorPtr>& out) {
  out.push_back(p.proj);
  out.push_back(p.bias);
  out.push_back(p.query);
}

void collect_topic(const TopicEncoderParams& p, std::vector<TensorPtr>& out) {
  out.push_back(p.table);
  out.push_back(p.weight);
  out.push_back(p.bias);
}

TensorPtr init_matrix(std::vector<int> shape, const std::string& name, Rng& rng) {
  auto t = param(shape, name);
  const int fan_in = shape.size() == 2 ? shape[0] : shape[0];
  const int fan_out = shape.size() == 2 ? shape[1] : 1;
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t->values) v = rng.uniform(-r, r);
  return t;
}

TensorPtr init_zero(std::vector<int> shape, const std::string& name) {
  return param(std::move(shape), name);
}

TensorPtr init_table(int rows, int cols, const std::string& name, Rng& rng) {
  auto t = param({rows, cols}, name);
  for (int i = 1; i < rows; ++i)  // padding row stays zero
    for (int j = 0; j < cols; ++j) t->at(i, j) = rng.uniform(-0.1, 0.1);
  return t;
}

SelfAttentionParams init_attention(int d, int heads, const std::string& prefix, Rng& rng) {
  SelfAttentionParams p;
  const int dh = d / heads;
  for (int i = 0; i < heads; ++i) {
    const std::string h = prefix + ".head" + std::to_string(i);
    p.heads.push_back({init_matrix({d, dh}, h + ".query", rng),
                       init_matrix({d, dh}, h + ".key", rng),
                       init_matrix({d, dh}, h + ".value", rng)});
  }
  p.output = init_matrix({d, d}, prefix + ".output", rng);
  return p;
}

AdditiveAttentionParams init_pool(int d, int a, const std::string& prefix, Rng& rng) {
  AdditiveAttentionParams p;
  p.proj = init_matrix({d, a}, prefix + ".proj", rng);
  p.bias = init_zero({a}, prefix + ".bias");
  p.query = init_matrix({a}, prefix + ".query", rng);
  return p;
}

TopicEncoderParams init_topic(int vocab, int e, int d, const std::string& prefix, Rng& rng) {
  TopicEncoderParams p;
  p.table = init_table(vocab, e, prefix + ".table", rng);
  p.weight = init_matrix({d, e}, prefix + ".weight", rng);
  p.bias = init_zero({d}, prefix + ".bias");
  return p;
}

}  // namespace

ModelParams init_params(const ModelDims& dims, const TensorPtr& word_embeddings, Rng& rng) {
  dims.validate();
  if (word_embeddings->rank() != 2 || word_embeddings->rows() != dims.vocab ||
      word_embeddings->cols() != dims.dim) {
    throw ConfigError("init_params: embedding table " + shape_str(word_embeddings->shape) +
                      " does not match vocab " + std::to_string(dims.vocab) + " × dim " +
                      std::to_string(dims.dim));
  }

  ModelParams m;
  m.dims = dims;
  const int d = dims.dim;
  const int a = dims.attn_dim();

  m.encoder.word_embeddings = param({dims.vocab, d}, "encoder.word_embeddings");
  m.encoder.word_embeddings->values = word_embeddings->values;

  m.encoder.title_attention = init_attention(d, dims.encoder_heads, "encoder.title_attention", rng);
  m.encoder.title_pool = init_pool(d, a, "encoder.title_pool", rng);
  m.encoder.abstract_attention =
      init_attention(d, dims.encoder_heads, "encoder.abstract_attention", rng);
  m.encoder.abstract_pool = init_pool(d, a, "encoder.abstract_pool", rng);
  m.encoder.topic = init_topic(dims.topic_vocab, dims.topic_dim, d, "encoder.topic", rng);
  m.encoder.subtopic = init_topic(dims.subtopic_vocab, dims.topic_dim, d, "encoder.subtopic", rng);
  m.encoder.fusion_pool = init_pool(d, a, "encoder.fusion_pool", rng);

  const int dh = d / dims.channels;
  for (int i = 0; i < dims.channels; ++i) {
    const std::string h = "pin.detector.head" + std::to_string(i);
    m.pin.detector.push_back({init_matrix({d, dh}, h + ".query", rng),
                              init_matrix({d, dh}, h + ".key", rng),
                              init_matrix({d, dh}, h + ".value", rng)});
  }
  for (int i = 0; i < dims.channels; ++i) {
    const std::string c = "pin.channel" + std::to_string(i);
    m.pin.channels.push_back({init_matrix({d, dh + d}, c + ".reset", rng),
                              init_matrix({d, dh + d}, c + ".update", rng),
                              init_matrix({d, dh + d}, c + ".candidate", rng)});
  }
  m.pin.fusion = init_pool(d, a, "pin.fusion", rng);
  return m;
}

std::vector<TensorPtr> ModelParams::named() const {
  std::vector<TensorPtr> out;
  out.push_back(encoder.word_embeddings);
  collect_attention(encoder.title_attention, out);
  collect_pool(encoder.title_pool, out);
  collect_attention(encoder.abstract_attention, out);
  collect_pool(encoder.abstract_pool, out);
  collect_topic(encoder.topic, out);
  collect_topic(encoder.subtopic, out);
  collect_pool(encoder.fusion_pool, out);
  for (const auto& head : pin.detector) {
    out.push_back(head.query);
    out.push_back(head.key);
    out.push_back(head.value);
  }
  for (const auto& ch : pin.channels) {
    out.push_back(ch.reset);
    out.push_back(ch.update);
    out.push_back(ch.candidate);
  }
  collect_pool(pin.fusion, out);
  return out;
}

void ModelParams::zero_grad() {
  for (const auto& t : named()) t->zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;  // copies shared_ptrs; now deep-copy each tensor

  auto deep = [](TensorPtr& t) {
    auto fresh = std::make_shared<Tensor>(*t);
    t = fresh;
  };
  auto deep_pool = [&](AdditiveAttentionParams& p) {
    deep(p.proj);
    deep(p.bias);
    deep(p.query);
  };
  auto deep_attention = [&](SelfAttentionParams& p) {
    for (auto& h : p.heads) {
      deep(h.query);
      deep(h.key);
      deep(h.value);
    }
    deep(p.output);
  };
  auto deep_topic = [&](TopicEncoderParams& p) {
    deep(p.table);
    deep(p.weight);
    deep(p.bias);
  };

  deep(copy.encoder.word_embeddings);
  deep_attention(copy.encoder.title_attention);
  deep_pool(copy.encoder.title_pool);
  deep_attention(copy.encoder.abstract_attention);
  deep_pool(copy.encoder.abstract_pool);
  deep_topic(copy.encoder.topic);
  deep_topic(copy.encoder.subtopic);
  deep_pool(copy.encoder.fusion_pool);
  for (auto& h : copy.pin.detector) {
    deep(h.query);
    deep(h.key);
    deep(h.value);
  }
  for (auto& c : copy.pin.channels) {
    deep(c.reset);
    deep(c.update);
    deep(c.candidate);
  }
  deep_pool(copy.pin.fusion);
  return copy;
}

TensorPtr news_vector(const ModelParams& model, const EncodedNews& news,
                      const PartSelection& parts) {
  return encode_news(news, model.encoder, parts);
}

TensorPtr example_session(const ModelParams& model, const EncodedCorpus& corpus,
                          const SessionExample& example, const PartSelection& parts) {
  // encode only the real (unmasked) clicks; order is preserved, which gives
  // the same result as running the padded sequence through the masked ops
  std::vector<TensorPtr> clicked;
  for (std::size_t i = 0; i < example.history.size(); ++i) {
    if (!example.history_mask[i]) continue;
    clicked.push_back(
        news_vector(model, corpus.news[static_cast<std::size_t>(example.history[i])], parts));
  }
  if (clicked.empty()) return zeros({model.dims.dim});  // cold start
  std::vector<bool> all_live(clicked.size(), true);
  return session_vector(stack_rows(clicked), all_live, model.pin);
}

std::vector<double> score_example(const ModelParams& model, const EncodedCorpus& corpus,
                                  const SessionExample& example, const PartSelection& parts) {
  NoTape off;
  auto session = example_session(model, corpus, example, parts);
  std::vector<double> out;
  out.reserve(example.candidates.size());
  for (int idx : example.candidates) {
    auto candidate = news_vector(model, corpus.news[static_cast<std::size_t>(idx)], parts);
    out.push_back(score(session, candidate)->item());
  }
  return out;
}

}  // namespace mins
