#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mins/rng.hpp"
#include "mins/tensor.hpp"

namespace mins {

struct NewsRecord {
  std::string news_id;
  std::string topic;
  std::string subtopic;
  std::vector<std::string> title;     // tokenized
  std::vector<std::string> abstract;  // tokenized, possibly empty
};

/// Token table with id 0 reserved for padding and id 1 for unknown tokens.
/// Built deterministically: tokens at or above the frequency threshold,
/// ordered by descending frequency then lexicographically.
struct Vocabulary {
  static constexpr int kPadId = 0;
  static constexpr int kUnknownId = 1;

  std::vector<std::string> tokens;  // tokens[id]; [0]="<pad>", [1]="<unk>"
  std::unordered_map<std::string, int> to_id;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& token) const {
    auto it = to_id.find(token);
    return it == to_id.end() ? kUnknownId : it->second;
  }

  static Vocabulary from_tokens(std::vector<std::string> tokens);
};

struct Impression {
  std::string impression_id;
  std::string user_id;
  std::vector<std::string> history;  // clicked news ids, oldest first
  std::vector<std::pair<std::string, int>> candidates;  // (news_id, label)
};

struct EncodedNews {
  std::vector<int> title_ids;
  std::vector<bool> title_mask;
  std::vector<int> abstract_ids;
  std::vector<bool> abstract_mask;
  int topic_id = Vocabulary::kUnknownId;
  int subtopic_id = Vocabulary::kUnknownId;
  bool has_title = false;
  bool has_abstract = false;
};

struct Vocabularies {
  Vocabulary words;
  Vocabulary topics;
  Vocabulary subtopics;
};

struct EncodedCorpus {
  std::vector<std::string> ids;  // corpus order = input record order
  std::vector<EncodedNews> news;
  std::unordered_map<std::string, int> index;
  int word_vocab = 0;
  int topic_vocab = 0;
  int subtopic_vocab = 0;

  int index_of(const std::string& news_id) const;  // DataError if absent
};

std::vector<std::string> tokenize(const std::string& text);

std::vector<NewsRecord> parse_news_tsv(const std::string& path);
std::vector<Impression> parse_behaviors_tsv(const std::string& path);

Vocabularies build_vocabularies(const std::vector<NewsRecord>& records, int min_token_freq);

// Word table [V×dim]: file rows copied for in-vocabulary tokens, padding row
// zeroed, every other row drawn from uniform(-0.1, 0.1) under the seed.
TensorPtr load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab,
                                     int dim, std::uint64_t seed);

// Same layout with every non-padding row random (no pretrained file).
TensorPtr random_embeddings(int vocab_size, int dim, std::uint64_t seed);

EncodedCorpus encode_corpus(const std::vector<NewsRecord>& records, const Vocabularies& vocabs,
                            int title_len, int abstract_len);

enum class BatchMode { Train, Eval };

struct SessionExample {
  std::string impression_id;
  std::vector<int> history;  // corpus indices, -1 at padded slots
  std::vector<bool> history_mask;
  std::vector<int> candidates;  // corpus indices
  std::vector<int> labels;      // train mode: positive first, then K negatives
};

struct SessionBatch {
  std::vector<SessionExample> examples;
  int skipped_no_positive = 0;
  int skipped_no_negative = 0;
};

// Train mode emits one example per positive candidate, pairing it with K
// negatives sampled from the same impression's non-clicked candidates
// (without replacement when enough exist, with replacement otherwise).
// Eval mode emits one example per impression with every candidate and label.
// History keeps the most recent max_history items, left-padded.
SessionBatch build_batch(const std::vector<Impression>& impressions, const EncodedCorpus& corpus,
                         int max_history, int negatives, BatchMode mode, Rng& rng);

}  // namespace mins
