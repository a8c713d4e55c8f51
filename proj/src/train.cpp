#include "mins/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "mins/error.hpp"
#include "mins/eval.hpp"
#include "mins/ops.hpp"
#include "mins/pin.hpp"

namespace mins {

void TrainConfig::validate() const {
  if (dim <= 0) throw ConfigError("train config: dimension must be positive");
  if (encoder_heads <= 0 || dim % encoder_heads != 0) {
    throw ConfigError("train config: encoder heads " + std::to_string(encoder_heads) +
                      " must divide dimension " + std::to_string(dim));
  }
  if (channels <= 0 || dim % channels != 0) {
    throw ConfigError("train config: channel count " + std::to_string(channels) +
                      " must divide dimension " + std::to_string(dim));
  }
  // zero is allowed so the no-op learning rate behaves as documented
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train config: learning rate must be finite and non-negative");
  }
  if (negatives < 1) throw ConfigError("train config: need at least one negative per positive");
  if (batch_size < 1) throw ConfigError("train config: batch size must be positive");
  if (max_epochs < 1) throw ConfigError("train config: need at least one epoch");
  if (patience < 1) throw ConfigError("train config: patience must be positive");
  if (title_len < 1 || abstract_len < 1) {
    throw ConfigError("train config: text lengths must be positive");
  }
  if (max_history < 1) throw ConfigError("train config: history length must be positive");
  if (min_token_freq < 1) throw ConfigError("train config: token frequency floor must be >= 1");
  if (topic_dim < 1) throw ConfigError("train config: topic dim must be positive");
  if (!(validation_fraction >= 0.0) || validation_fraction >= 1.0) {
    throw ConfigError("train config: validation fraction must be in [0, 1)");
  }
}

ModelDims TrainConfig::dims_for(const EncodedCorpus& corpus) const {
  ModelDims d;
  d.vocab = corpus.word_vocab;
  d.dim = dim;
  d.encoder_heads = encoder_heads;
  d.channels = channels;
  d.topic_vocab = corpus.topic_vocab;
  d.subtopic_vocab = corpus.subtopic_vocab;
  d.topic_dim = topic_dim;
  return d;
}

void optimizer_step(const std::vector<TensorPtr>& tensors, OptimizerState& state, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  ++state.step;
  const double correction1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));

  for (const auto& t : tensors) {
    if (!t->requires_grad || t->grad.size() != t->values.size()) {
      throw std::invalid_argument("optimizer_step: tensor '" + t->name + "' has no gradient");
    }
    for (double g : t->grad) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("optimizer_step: non-finite gradient in '" + t->name + "'");
      }
    }

    if (state.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < t->values.size(); ++i) t->values[i] -= lr * t->grad[i];
      continue;
    }

    auto& m = state.first_moment[t->name];
    auto& v = state.second_moment[t->name];
    if (m.empty()) m.assign(t->values.size(), 0.0);
    if (v.empty()) v.assign(t->values.size(), 0.0);
    if (m.size() != t->values.size() || v.size() != t->values.size()) {
      throw std::invalid_argument("optimizer_step: stale moment buffers for '" + t->name + "'");
    }
    for (std::size_t i = 0; i < t->values.size(); ++i) {
      const double g = t->grad[i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      t->values[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
    }
  }
}

namespace {

bool any_live(const std::vector<bool>& mask) {
  for (bool b : mask) {
    if (b) return true;
  }
  return false;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const EncodedCorpus& corpus,
                  const std::vector<Impression>& impressions, const TensorPtr& word_embeddings,
                  std::ostream* progress) {
  cfg.validate();
  if (impressions.empty()) throw ConfigError("train: empty training set");

  Rng rng(cfg.seed);
  Rng init_rng = rng.fork(1);
  ModelParams model = init_params(cfg.dims_for(corpus), word_embeddings, init_rng);

  // seeded validation split
  std::vector<std::size_t> order(impressions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = rng.fork(2);
  split_rng.shuffle(order);
  const auto n_val =
      static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(order.size()));
  std::vector<Impression> val_impressions, train_impressions;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val_impressions : train_impressions).push_back(impressions[order[i]]);
  }
  if (train_impressions.empty()) throw ConfigError("train: validation split left no training data");

  std::vector<SessionExample> val_examples;
  if (!val_impressions.empty()) {
    Rng unused = rng.fork(3);
    val_examples =
        build_batch(val_impressions, corpus, cfg.max_history, cfg.negatives, BatchMode::Eval,
                    unused)
            .examples;
  }

  std::vector<TensorPtr> trainable = model.named();
  if (cfg.freeze_embeddings) {
    std::erase_if(trainable,
                  [&](const TensorPtr& t) { return t == model.encoder.word_embeddings; });
  }

  TrainResult result;
  result.state.kind = cfg.optimizer;
  ModelParams best;
  OptimizerState best_state;
  bool have_best = false;
  int stale_validations = 0;
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    result.epochs_run = epoch;
    Rng epoch_rng = rng.fork(100 + static_cast<std::uint64_t>(epoch));

    SessionBatch built = build_batch(train_impressions, corpus, cfg.max_history, cfg.negatives,
                                     BatchMode::Train, epoch_rng);
    result.skipped_no_positive = built.skipped_no_positive;
    auto& examples = built.examples;
    // cold sessions carry no signal through the interest network; drop them
    const auto before = examples.size();
    std::erase_if(examples,
                  [](const SessionExample& ex) { return !any_live(ex.history_mask); });
    result.skipped_empty_history = static_cast<int>(before - examples.size());
    if (examples.empty()) {
      throw ConfigError("train: no usable training examples (positives with history required)");
    }
    epoch_rng.shuffle(examples);

    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (std::size_t start = 0; start < examples.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(examples.size(), start + static_cast<std::size_t>(cfg.batch_size));

      Tape tape;
      model.zero_grad();

      // one taped vector per distinct news item in the batch; reuse
      // accumulates gradients from every consumer
      std::unordered_map<int, TensorPtr> cache;
      auto cached_vector = [&](int idx) -> const TensorPtr& {
        auto [it, fresh] = cache.try_emplace(idx);
        if (fresh) {
          it->second = news_vector(model, corpus.news[static_cast<std::size_t>(idx)], cfg.parts);
        }
        return it->second;
      };

      std::vector<TensorPtr> positive_scores;
      std::vector<std::vector<TensorPtr>> negative_scores;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = examples[i];
        std::vector<TensorPtr> clicked;
        for (std::size_t h = 0; h < ex.history.size(); ++h) {
          if (ex.history_mask[h]) clicked.push_back(cached_vector(ex.history[h]));
        }
        std::vector<bool> live(clicked.size(), true);
        auto session = session_vector(stack_rows(clicked), live, model.pin);

        positive_scores.push_back(score(session, cached_vector(ex.candidates[0])));
        std::vector<TensorPtr> negs;
        for (std::size_t c = 1; c < ex.candidates.size(); ++c) {
          negs.push_back(score(session, cached_vector(ex.candidates[c])));
        }
        negative_scores.push_back(std::move(negs));
      }

      auto loss = nll_loss(positive_scores, negative_scores, cfg.reduction);
      const double loss_value = loss->item();
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step + 1));
      }
      tape.backward(loss);
      optimizer_step(trainable, result.state, cfg.learning_rate);
      ++step;
      result.history.push_back(
          {step, epoch, loss_value, std::numeric_limits<double>::quiet_NaN()});
      epoch_loss += loss_value;
      ++epoch_batches;
    }

    double val_auc = std::numeric_limits<double>::quiet_NaN();
    if (!val_examples.empty()) {
      try {
        val_auc = evaluate(model, corpus, val_examples, cfg.parts).auc;
      } catch (const DataError&) {
        // the split produced no scoreable validation impression; train on
        val_examples.clear();
      }
    }
    if (progress) {
      *progress << "epoch " << epoch << "/" << cfg.max_epochs << "  mean loss "
                << epoch_loss / epoch_batches;
      if (!std::isnan(val_auc)) *progress << "  val auc " << val_auc;
      *progress << std::endl;
    }
    if (!std::isnan(val_auc)) {
      result.history.back().val_auc = val_auc;
      if (!have_best || val_auc > result.best_val_auc) {
        result.best_val_auc = val_auc;
        result.best_epoch = epoch;
        best = model.clone();
        best_state = result.state;
        have_best = true;
        stale_validations = 0;
      } else if (++stale_validations >= cfg.patience) {
        break;
      }
    }
  }

  if (have_best) {
    result.params = std::move(best);
    result.state = std::move(best_state);
  } else {
    result.params = std::move(model);
  }
  return result;
}

void write_history_csv(const std::vector<TrainLogRow>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history log: " + path);
  out << "step,epoch,loss,val_auc\n";
  out.precision(17);
  for (const auto& row : history) {
    out << row.step << ',' << row.epoch << ',' << row.loss << ',';
    if (!std::isnan(row.val_auc)) out << row.val_auc;
    out << '\n';
  }
}

namespace {

constexpr char kMagic[8] = {'M', 'I', 'N', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, &v, 1); }

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  put_bytes(os, s.data(), s.size());
}

void get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw DataError("checkpoint truncated");
}

std::uint8_t get_u8(std::istream& is) {
  std::uint8_t v;
  get_bytes(is, &v, 1);
  return v;
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  get_bytes(is, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  get_bytes(is, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

std::string get_string(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1u << 26)) throw DataError("checkpoint corrupt: implausible string length");
  std::string s(n, '\0');
  if (n > 0) get_bytes(is, s.data(), n);
  return s;
}

void put_vocabulary(std::ostream& os, const Vocabulary& v) {
  put_u64(os, v.tokens.size());
  for (const auto& t : v.tokens) put_string(os, t);
}

Vocabulary get_vocabulary(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1u << 26)) throw DataError("checkpoint corrupt: implausible vocabulary size");
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) tokens.push_back(get_string(is));
  return Vocabulary::from_tokens(std::move(tokens));
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put_string(os, t.name);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.values) put_f64(os, v);
}

std::uint8_t parts_bits(const PartSelection& p) {
  return static_cast<std::uint8_t>((p.title ? 1 : 0) | (p.abstract ? 2 : 0) |
                                   (p.topics ? 4 : 0));
}

PartSelection parts_from_bits(std::uint8_t bits) {
  PartSelection p;
  p.title = (bits & 1) != 0;
  p.abstract = (bits & 2) != 0;
  p.topics = (bits & 4) != 0;
  return p;
}

void put_config(std::ostream& os, const TrainConfig& c) {
  put_u32(os, static_cast<std::uint32_t>(c.dim));
  put_u32(os, static_cast<std::uint32_t>(c.encoder_heads));
  put_u32(os, static_cast<std::uint32_t>(c.channels));
  put_u32(os, static_cast<std::uint32_t>(c.topic_dim));
  put_u32(os, static_cast<std::uint32_t>(c.title_len));
  put_u32(os, static_cast<std::uint32_t>(c.abstract_len));
  put_u32(os, static_cast<std::uint32_t>(c.max_history));
  put_u32(os, static_cast<std::uint32_t>(c.min_token_freq));
  put_f64(os, c.learning_rate);
  put_u32(os, static_cast<std::uint32_t>(c.negatives));
  put_u32(os, static_cast<std::uint32_t>(c.batch_size));
  put_u32(os, static_cast<std::uint32_t>(c.max_epochs));
  put_u32(os, static_cast<std::uint32_t>(c.patience));
  put_u64(os, c.seed);
  put_f64(os, c.validation_fraction);
  put_u8(os, c.optimizer == OptimizerKind::Adam ? 0 : 1);
  put_u8(os, c.freeze_embeddings ? 1 : 0);
  put_u8(os, c.reduction == LossReduction::Sum ? 0 : 1);
  put_u8(os, parts_bits(c.parts));
}

TrainConfig get_config(std::istream& is) {
  TrainConfig c;
  c.dim = static_cast<int>(get_u32(is));
  c.encoder_heads = static_cast<int>(get_u32(is));
  c.channels = static_cast<int>(get_u32(is));
  c.topic_dim = static_cast<int>(get_u32(is));
  c.title_len = static_cast<int>(get_u32(is));
  c.abstract_len = static_cast<int>(get_u32(is));
  c.max_history = static_cast<int>(get_u32(is));
  c.min_token_freq = static_cast<int>(get_u32(is));
  c.learning_rate = get_f64(is);
  c.negatives = static_cast<int>(get_u32(is));
  c.batch_size = static_cast<int>(get_u32(is));
  c.max_epochs = static_cast<int>(get_u32(is));
  c.patience = static_cast<int>(get_u32(is));
  c.seed = get_u64(is);
  c.validation_fraction = get_f64(is);
  c.optimizer = get_u8(is) == 0 ? OptimizerKind::Adam : OptimizerKind::Sgd;
  c.freeze_embeddings = get_u8(is) != 0;
  c.reduction = get_u8(is) == 0 ? LossReduction::Sum : LossReduction::Mean;
  c.parts = parts_from_bits(get_u8(is));
  return c;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const OptimizerState& state,
                     const TrainConfig& config, const Vocabularies& vocabs,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);

  put_bytes(out, kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_config(out, config);
  put_vocabulary(out, vocabs.words);
  put_vocabulary(out, vocabs.topics);
  put_vocabulary(out, vocabs.subtopics);

  const auto tensors = params.named();
  put_u64(out, tensors.size());
  for (const auto& t : tensors) put_tensor(out, *t);

  put_u8(out, state.kind == OptimizerKind::Adam ? 0 : 1);
  put_u64(out, static_cast<std::uint64_t>(state.step));
  put_u64(out, state.first_moment.size());
  for (const auto& [name, m] : state.first_moment) {
    auto it = state.second_moment.find(name);
    if (it == state.second_moment.end() || it->second.size() != m.size()) {
      throw std::invalid_argument("save_checkpoint: moment buffers disagree for '" + name + "'");
    }
    put_string(out, name);
    put_u64(out, m.size());
    for (double v : m) put_f64(out, v);
    for (double v : it->second) put_f64(out, v);
  }

  if (!out) throw DataError("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  char magic[8];
  get_bytes(in, magic, sizeof(magic));
  if (!std::equal(magic, magic + 8, kMagic)) {
    throw DataError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.config = get_config(in);
  ckpt.vocabs.words = get_vocabulary(in);
  ckpt.vocabs.topics = get_vocabulary(in);
  ckpt.vocabs.subtopics = get_vocabulary(in);

  ModelDims dims;
  dims.vocab = ckpt.vocabs.words.size();
  dims.dim = ckpt.config.dim;
  dims.encoder_heads = ckpt.config.encoder_heads;
  dims.channels = ckpt.config.channels;
  dims.topic_vocab = ckpt.vocabs.topics.size();
  dims.subtopic_vocab = ckpt.vocabs.subtopics.size();
  dims.topic_dim = ckpt.config.topic_dim;
  Rng skeleton_rng(0);
  ckpt.params = init_params(dims, zeros({dims.vocab, dims.dim}), skeleton_rng);

  std::unordered_map<std::string, TensorPtr> by_name;
  for (const auto& t : ckpt.params.named()) by_name[t->name] = t;

  const std::uint64_t tensor_count = get_u64(in);
  std::size_t filled = 0;
  for (std::uint64_t i = 0; i < tensor_count; ++i) {
    const std::string name = get_string(in);
    const std::uint32_t rank = get_u32(in);
    if (rank > 2) throw DataError("checkpoint corrupt: tensor '" + name + "' has rank > 2");
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(get_u32(in)));
      n *= static_cast<std::size_t>(shape.back());
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint holds unknown tensor '" + name + "'");
    if (it->second->shape != shape) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                      ", expected " + shape_str(it->second->shape));
    }
    for (std::size_t v = 0; v < n; ++v) it->second->values[v] = get_f64(in);
    ++filled;
  }
  if (filled != by_name.size()) {
    throw DataError("checkpoint is missing " + std::to_string(by_name.size() - filled) +
                    " tensors");
  }

  ckpt.state.kind = get_u8(in) == 0 ? OptimizerKind::Adam : OptimizerKind::Sgd;
  ckpt.state.step = static_cast<std::int64_t>(get_u64(in));
  const std::uint64_t moment_count = get_u64(in);
  for (std::uint64_t i = 0; i < moment_count; ++i) {
    const std::string name = get_string(in);
    const std::uint64_t n = get_u64(in);
    if (n > (1u << 28)) throw DataError("checkpoint corrupt: implausible moment size");
    std::vector<double> m(n), v(n);
    for (auto& x : m) x = get_f64(in);
    for (auto& x : v) x = get_f64(in);
    ckpt.state.first_moment[name] = std::move(m);
    ckpt.state.second_moment[name] = std::move(v);
  }

  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("checkpoint has trailing bytes: " + path);
  }
  return ckpt;
}

}  // namespace mins
