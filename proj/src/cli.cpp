#include "mins/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mins/data.hpp"
#include "mins/error.hpp"
#include "mins/eval.hpp"
#include "mins/model.hpp"
#include "mins/rng.hpp"
#include "mins/synth.hpp"
#include "mins/train.hpp"

namespace mins {
namespace {

struct CliOptions {
  std::string news;
  std::string behaviors;
  std::string embeddings;
  std::string checkpoint;
  std::string out;
  std::string variant = "act";
  std::string optimizer = "adam";
  TrainConfig train;

  std::string grid = "variants";
  std::string channel_grid = "1,2,3,5,6,10";
  double holdout = 0.2;

  SynthConfig synth;
};

PartSelection parse_variant(const std::string& v) {
  static const std::map<std::string, PartSelection> kVariants = {
      {"t", {true, false, false}},  {"tc", {true, false, true}}, {"a", {false, true, false}},
      {"ac", {false, true, true}},  {"at", {true, true, false}}, {"act", {true, true, true}},
  };
  auto it = kVariants.find(v);
  if (it == kVariants.end()) {
    throw ConfigError("unknown input variant '" + v + "' (one of: t, tc, a, ac, at, act)");
  }
  return it->second;
}

OptimizerKind parse_optimizer(const std::string& v) {
  if (v == "adam") return OptimizerKind::Adam;
  if (v == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + v + "' (adam or sgd)");
}

// Resolves the string-valued flags into the train config and validates it.
// Called before any file is touched so bad settings fail fast.
TrainConfig settle(CliOptions& o) {
  o.train.optimizer = parse_optimizer(o.optimizer);
  o.train.parts = parse_variant(o.variant);
  o.train.validate();
  return o.train;
}

void add_model_flags(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--dim", o.train.dim, "news/session vector dimension")->capture_default_str();
  cmd->add_option("--heads", o.train.encoder_heads, "encoder self-attention heads")
      ->capture_default_str();
  cmd->add_option("--channels", o.train.channels, "interest channels")->capture_default_str();
  cmd->add_option("--topic-dim", o.train.topic_dim, "topic/subtopic embedding width")
      ->capture_default_str();
  cmd->add_option("--variant", o.variant, "input parts: t, tc, a, ac, at, act")
      ->check(CLI::IsMember({"t", "tc", "a", "ac", "at", "act"}))
      ->capture_default_str();
  cmd->add_option("--title-len", o.train.title_len, "title tokens kept")->capture_default_str();
  cmd->add_option("--abstract-len", o.train.abstract_len, "abstract tokens kept")
      ->capture_default_str();
  cmd->add_option("--history", o.train.max_history, "most recent clicks kept")
      ->capture_default_str();
}

void add_train_flags(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--lr", o.train.learning_rate, "learning rate")->capture_default_str();
  cmd->add_option("--negatives", o.train.negatives, "negatives sampled per positive")
      ->capture_default_str();
  cmd->add_option("--batch", o.train.batch_size, "positives per optimizer step")
      ->capture_default_str();
  cmd->add_option("--epochs", o.train.max_epochs, "maximum epochs")->capture_default_str();
  cmd->add_option("--patience", o.train.patience,
                  "validations without improvement before stopping")
      ->capture_default_str();
  cmd->add_option("--val-fraction", o.train.validation_fraction,
                  "validation share of the training impressions")
      ->capture_default_str();
  cmd->add_option("--min-token-freq", o.train.min_token_freq, "vocabulary frequency floor")
      ->capture_default_str();
  cmd->add_flag("--freeze-embeddings", o.train.freeze_embeddings,
                "keep the word table at its initial values");
  cmd->add_option("--optimizer", o.optimizer, "adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  cmd->add_option("--embeddings", o.embeddings, "pretrained word embedding text file");
  cmd->add_option("--seed", o.train.seed, "run seed")->capture_default_str();
}

struct LoadedData {
  Vocabularies vocabs;
  EncodedCorpus corpus;
  std::vector<Impression> impressions;
};

LoadedData load_data(const CliOptions& o, const TrainConfig& cfg) {
  LoadedData d;
  auto records = parse_news_tsv(o.news);
  d.impressions = parse_behaviors_tsv(o.behaviors);
  d.vocabs = build_vocabularies(records, cfg.min_token_freq);
  d.corpus = encode_corpus(records, d.vocabs, cfg.title_len, cfg.abstract_len);
  return d;
}

TensorPtr embedding_table(const CliOptions& o, const Vocabulary& words, const TrainConfig& cfg) {
  if (o.embeddings.empty()) return random_embeddings(words.size(), cfg.dim, cfg.seed);
  return load_pretrained_embeddings(o.embeddings, words, cfg.dim, cfg.seed);
}

void cmd_train(CliOptions& o) {
  TrainConfig cfg = settle(o);
  std::filesystem::create_directories(o.out);

  LoadedData d = load_data(o, cfg);
  TensorPtr table = embedding_table(o, d.vocabs.words, cfg);
  TrainResult result = train(cfg, d.corpus, d.impressions, table, &std::cerr);

  const auto out_dir = std::filesystem::path(o.out);
  save_checkpoint(result.params, result.state, cfg, d.vocabs, (out_dir / "model.ckpt").string());
  write_history_csv(result.history, (out_dir / "history.csv").string());

  std::cout << "trained " << result.epochs_run << " epochs, "
            << (result.history.empty() ? 0 : result.history.back().step) << " steps";
  if (result.best_epoch > 0) {
    std::cout << "; best validation auc " << std::fixed << std::setprecision(4)
              << result.best_val_auc << " at epoch " << result.best_epoch;
  }
  std::cout << "\ncheckpoint: " << (out_dir / "model.ckpt").string() << '\n';
}

// Structural flags given explicitly on eval/predict must agree with the
// checkpoint; the stored model cannot change shape after the fact.
void check_override(const CLI::App& cmd, const std::string& flag, int requested, int stored) {
  if (cmd.count(flag) > 0 && requested != stored) {
    throw ConfigError(flag + " " + std::to_string(requested) +
                      " does not match the checkpoint's " + std::to_string(stored));
  }
}

struct ScoredRun {
  Checkpoint ckpt;
  EncodedCorpus corpus;
  std::vector<SessionExample> examples;
  PartSelection parts;
};

ScoredRun prepare_scoring(const CliOptions& o, const CLI::App& cmd) {
  ScoredRun run;
  run.ckpt = load_checkpoint(o.checkpoint);
  check_override(cmd, "--dim", o.train.dim, run.ckpt.config.dim);
  check_override(cmd, "--heads", o.train.encoder_heads, run.ckpt.config.encoder_heads);
  check_override(cmd, "--channels", o.train.channels, run.ckpt.config.channels);
  check_override(cmd, "--topic-dim", o.train.topic_dim, run.ckpt.config.topic_dim);
  run.parts = cmd.count("--variant") > 0 ? parse_variant(o.variant) : run.ckpt.config.parts;

  auto records = parse_news_tsv(o.news);
  auto impressions = parse_behaviors_tsv(o.behaviors);
  run.corpus = encode_corpus(records, run.ckpt.vocabs, run.ckpt.config.title_len,
                             run.ckpt.config.abstract_len);
  Rng unused(0);
  run.examples = build_batch(impressions, run.corpus, run.ckpt.config.max_history,
                             run.ckpt.config.negatives, BatchMode::Eval, unused)
                     .examples;
  return run;
}

void cmd_eval(const CliOptions& o, const CLI::App& cmd) {
  ScoredRun run = prepare_scoring(o, cmd);
  MetricsReport report = evaluate(run.ckpt.params, run.corpus, run.examples, run.parts);
  std::cout << report.table() << report.json() << '\n';
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw DataError("cannot write metrics file: " + o.out);
    out << report.json() << '\n';
  }
}

void cmd_predict(const CliOptions& o, const CLI::App& cmd) {
  ScoredRun run = prepare_scoring(o, cmd);
  auto results = score_impressions(run.ckpt.params, run.corpus, run.examples, run.parts);

  std::ofstream out(o.out);
  if (!out) throw DataError("cannot write predictions: " + o.out);
  out.precision(10);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto order = ranked_indices(r);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const int candidate = run.examples[i].candidates[static_cast<std::size_t>(order[pos])];
      out << r.impression_id << '\t' << run.corpus.ids[static_cast<std::size_t>(candidate)]
          << '\t' << pos + 1 << '\t' << r.scores[static_cast<std::size_t>(order[pos])] << '\n';
    }
  }
  if (!out) throw DataError("write failed for predictions: " + o.out);
  std::cout << "wrote rankings for " << results.size() << " impressions to " << o.out << '\n';
}

std::vector<int> parse_channel_grid(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const int k = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(k);
    } catch (const std::exception&) {
      throw ConfigError("bad channel grid entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("channel grid is empty");
  return out;
}

void cmd_ablate(CliOptions& o) {
  TrainConfig base = settle(o);
  if (!(o.holdout > 0.0) || o.holdout >= 1.0) {
    throw ConfigError("holdout fraction must be in (0, 1)");
  }

  // the whole grid is validated before any data is read or model built
  std::vector<std::pair<std::string, TrainConfig>> runs;
  if (o.grid == "variants") {
    for (const char* v : {"t", "tc", "a", "ac", "at", "act"}) {
      TrainConfig c = base;
      c.parts = parse_variant(v);
      runs.emplace_back(v, c);
    }
  } else if (o.grid == "channels") {
    for (int k : parse_channel_grid(o.channel_grid)) {
      TrainConfig c = base;
      c.channels = k;
      c.validate();
      runs.emplace_back("k=" + std::to_string(k), c);
    }
  } else {
    throw ConfigError("unknown ablation grid '" + o.grid + "' (variants or channels)");
  }

  LoadedData d = load_data(o, base);

  // seeded holdout split shared by every run
  std::vector<std::size_t> order(d.impressions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = Rng(base.seed).fork(9000);
  split_rng.shuffle(order);
  const auto n_test =
      static_cast<std::size_t>(o.holdout * static_cast<double>(order.size()));
  std::vector<Impression> test_impressions, train_impressions;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_test ? test_impressions : train_impressions).push_back(d.impressions[order[i]]);
  }
  if (test_impressions.empty() || train_impressions.empty()) {
    throw ConfigError("too few impressions to split for ablation");
  }
  Rng unused(0);
  auto test_examples = build_batch(test_impressions, d.corpus, base.max_history, base.negatives,
                                   BatchMode::Eval, unused)
                           .examples;

  TensorPtr table = embedding_table(o, d.vocabs.words, base);

  std::ofstream csv(o.out);
  if (!csv) throw DataError("cannot write ablation table: " + o.out);
  csv << "setting,auc,mrr,ndcg5,ndcg10\n";
  csv << std::fixed << std::setprecision(6);

  std::cout << std::left << std::setw(10) << "setting" << std::setw(9) << "auc" << std::setw(9)
            << "mrr" << std::setw(9) << "ndcg@5" << std::setw(9) << "ndcg@10" << '\n';
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& [name, cfg] : runs) {
    std::cerr << "ablate " << name << std::endl;
    TrainResult result = train(cfg, d.corpus, train_impressions, table, &std::cerr);
    MetricsReport rep = evaluate(result.params, d.corpus, test_examples, cfg.parts);
    std::cout << std::left << std::setw(10) << name << std::setw(9) << rep.auc << std::setw(9)
              << rep.mrr << std::setw(9) << rep.ndcg5 << std::setw(9) << rep.ndcg10 << '\n';
    csv << name << ',' << rep.auc << ',' << rep.mrr << ',' << rep.ndcg5 << ',' << rep.ndcg10
        << '\n';
  }
}

void cmd_synth(CliOptions& o) {
  o.synth.validate();
  std::filesystem::create_directories(o.out);
  SynthData data = generate(o.synth);
  const auto out_dir = std::filesystem::path(o.out);
  write_news_tsv(data.news, (out_dir / "news.tsv").string());
  write_behaviors_tsv(data.impressions, (out_dir / "behaviors.tsv").string());
  std::cout << "wrote " << data.news.size() << " news items and " << data.impressions.size()
            << " impressions to " << o.out << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CliOptions o;
  CLI::App app{"MINS session-based news recommender"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("--news", o.news, "news.tsv")->required();
  train_cmd->add_option("--behaviors", o.behaviors, "behaviors.tsv")->required();
  train_cmd->add_option("--out", o.out, "output directory for model.ckpt and history.csv")
      ->required();
  add_model_flags(train_cmd, o);
  add_train_flags(train_cmd, o);

  auto* eval_cmd = app.add_subcommand("eval", "score impressions and report ranking metrics");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--news", o.news, "news.tsv")->required();
  eval_cmd->add_option("--behaviors", o.behaviors, "behaviors.tsv")->required();
  eval_cmd->add_option("--out", o.out, "optional metrics JSON path");
  add_model_flags(eval_cmd, o);

  auto* predict_cmd = app.add_subcommand("predict", "write ranked candidates per impression");
  predict_cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  predict_cmd->add_option("--news", o.news, "news.tsv")->required();
  predict_cmd->add_option("--behaviors", o.behaviors, "behaviors.tsv")->required();
  predict_cmd->add_option("--out", o.out, "output TSV: impression, news, rank, score")
      ->required();
  add_model_flags(predict_cmd, o);

  auto* ablate_cmd =
      app.add_subcommand("ablate", "train a variant or channel grid and tabulate metrics");
  ablate_cmd->add_option("--news", o.news, "news.tsv")->required();
  ablate_cmd->add_option("--behaviors", o.behaviors, "behaviors.tsv")->required();
  ablate_cmd->add_option("--out", o.out, "output CSV path")->required();
  ablate_cmd->add_option("--grid", o.grid, "variants or channels")
      ->check(CLI::IsMember({"variants", "channels"}))
      ->capture_default_str();
  ablate_cmd->add_option("--channel-grid", o.channel_grid, "comma-separated channel counts")
      ->capture_default_str();
  ablate_cmd->add_option("--holdout", o.holdout, "held-out test fraction")
      ->capture_default_str();
  add_model_flags(ablate_cmd, o);
  add_train_flags(ablate_cmd, o);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-interest corpus");
  synth_cmd->add_option("--out", o.out, "output directory for news.tsv and behaviors.tsv")
      ->required();
  synth_cmd->add_option("--topics", o.synth.num_topics, "distinct topics")->capture_default_str();
  synth_cmd->add_option("--vocab-per-topic", o.synth.vocab_per_topic, "tokens owned per topic")
      ->capture_default_str();
  synth_cmd->add_option("--interests", o.synth.interests_per_session, "topics mixed per session")
      ->capture_default_str();
  synth_cmd->add_option("--sessions", o.synth.sessions, "impressions generated")
      ->capture_default_str();
  synth_cmd->add_option("--candidates", o.synth.candidates, "candidates per impression")
      ->capture_default_str();
  synth_cmd->add_option("--positives", o.synth.positives, "positive candidates per impression")
      ->capture_default_str();
  synth_cmd->add_option("--history-length", o.synth.history_length, "clicks per session")
      ->capture_default_str();
  synth_cmd->add_option("--news-per-topic", o.synth.news_per_topic, "news items per topic")
      ->capture_default_str();
  synth_cmd->add_option("--title-len", o.synth.title_len, "title tokens per news item")
      ->capture_default_str();
  synth_cmd->add_option("--abstract-len", o.synth.abstract_len, "abstract tokens per news item")
      ->capture_default_str();
  synth_cmd->add_option("--seed", o.synth.seed, "generator seed")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      cmd_train(o);
    } else if (eval_cmd->parsed()) {
      cmd_eval(o, *eval_cmd);
    } else if (predict_cmd->parsed()) {
      cmd_predict(o, *predict_cmd);
    } else if (ablate_cmd->parsed()) {
      cmd_ablate(o);
    } else if (synth_cmd->parsed()) {
      cmd_synth(o);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace mins
