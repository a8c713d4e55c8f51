#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mins/data.hpp"
#include "mins/head.hpp"
#include "mins/model.hpp"

namespace mins {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  int dim = 300;
  int encoder_heads = 15;
  int channels = 6;
  double learning_rate = 1e-4;
  int negatives = 4;    // sampled per positive
  int batch_size = 64;  // positives per optimizer step
  int max_epochs = 10;
  int patience = 3;  // validations without a new best before stopping
  std::uint64_t seed = 42;

  int title_len = 20;
  int abstract_len = 50;
  int max_history = 50;
  int min_token_freq = 2;
  int topic_dim = 100;
  double validation_fraction = 0.1;  // 0 disables validation and early stop

  OptimizerKind optimizer = OptimizerKind::Adam;
  bool freeze_embeddings = false;
  LossReduction reduction = LossReduction::Sum;
  PartSelection parts;

  void validate() const;  // ConfigError on violated bounds
  ModelDims dims_for(const EncodedCorpus& corpus) const;
};

/// Per-tensor moment buffers keyed by tensor name; empty for plain SGD.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  std::int64_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

// One update over the given tensors from their accumulated gradients: Adam
// (β1 0.9, β2 0.999, ε 1e-8) or plain SGD, by state.kind. A non-finite
// gradient aborts with a diagnostic naming the tensor.
void optimizer_step(const std::vector<TensorPtr>& tensors, OptimizerState& state, double lr);

struct TrainLogRow {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;  // batch loss at this step
  double val_auc = std::numeric_limits<double>::quiet_NaN();  // set on validation rows
};

struct TrainResult {
  ModelParams params;  // best validation AUC; final params when no validation ran
  OptimizerState state;
  double best_val_auc = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;
  int epochs_run = 0;
  int skipped_no_positive = 0;
  int skipped_empty_history = 0;
  std::vector<TrainLogRow> history;
};

// Epochs over shuffled per-positive examples with freshly sampled negatives,
// a seeded validation split scored after every epoch, best-AUC model
// selection, and patience-based early stopping. Deterministic under seed.
// One line per epoch goes to progress when given.
TrainResult train(const TrainConfig& cfg, const EncodedCorpus& corpus,
                  const std::vector<Impression>& impressions, const TensorPtr& word_embeddings,
                  std::ostream* progress = nullptr);

// "step,epoch,loss,val_auc" rows; the last field is empty on non-validation
// rows.
void write_history_csv(const std::vector<TrainLogRow>& history, const std::string& path);

struct Checkpoint {
  TrainConfig config;  // echo of the run that produced the file
  Vocabularies vocabs;
  ModelParams params;
  OptimizerState state;
};

// Binary format: magic "MINSCKPT", a format version, the config echo, the
// three vocabularies, then per-tensor records (name, rank, dims,
// little-endian 64-bit floats) and the optimizer moments.
void save_checkpoint(const ModelParams& params, const OptimizerState& state,
                     const TrainConfig& config, const Vocabularies& vocabs,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);  // DataError on bad files

}  // namespace mins
