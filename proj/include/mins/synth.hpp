#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mins/data.hpp"

namespace mins {

/// Controls the synthetic multi-interest corpus: every topic owns a disjoint
/// token pool, every session mixes a fixed number of topics, positives come
/// from the session's topics and negatives from the others.
struct SynthConfig {
  int num_topics = 6;
  int vocab_per_topic = 20;
  int interests_per_session = 3;  // topics mixed into one session
  int sessions = 1000;
  int candidates = 10;  // per impression, including the positives
  int positives = 1;
  int history_length = 12;
  int news_per_topic = 40;
  int title_len = 4;
  int abstract_len = 6;  // 0 emits empty abstracts
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError on infeasible counts
};

struct SynthData {
  std::vector<NewsRecord> news;
  std::vector<Impression> impressions;
};

// Deterministic under seed. Session histories interleave the session's
// topics round-robin, oldest click first.
SynthData generate(const SynthConfig& cfg);

// MIND-format writers (url and entity columns left empty).
void write_news_tsv(const std::vector<NewsRecord>& news, const std::string& path);
void write_behaviors_tsv(const std::vector<Impression>& impressions, const std::string& path);

}  // namespace mins
