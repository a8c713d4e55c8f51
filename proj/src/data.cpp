#include "mins/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "mins/error.hpp"

namespace mins {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::vector<std::string> split_spaces(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens = std::move(tokens);
  for (int i = 0; i < v.size(); ++i) v.to_id[v.tokens[static_cast<std::size_t>(i)]] = i;
  return v;
}

std::vector<NewsRecord> parse_news_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open news file: " + path);

  std::vector<NewsRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 8) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 8 tab-separated columns, got " +
                      std::to_string(fields.size()));
    }
    NewsRecord rec;
    rec.news_id = fields[0];
    rec.topic = fields[1];
    rec.subtopic = fields[2];
    rec.title = tokenize(fields[3]);
    rec.abstract = tokenize(fields[4]);
    // fields 5..7 (url, entities) are ignored
    if (!seen.insert(rec.news_id).second) {
      throw DataError(path + ":" + std::to_string(line_no) + ": duplicate news id " + rec.news_id);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<Impression> parse_behaviors_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open behaviors file: " + path);

  std::vector<Impression> impressions;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 5) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 5 tab-separated columns, got " +
                      std::to_string(fields.size()));
    }
    Impression imp;
    imp.impression_id = fields[0];
    imp.user_id = fields[1];
    imp.history = split_spaces(fields[3]);
    for (const std::string& tok : split_spaces(fields[4])) {
      std::size_t dash = tok.rfind('-');
      if (dash == std::string::npos || dash + 2 != tok.size() ||
          (tok[dash + 1] != '0' && tok[dash + 1] != '1')) {
        throw DataError(path + ":" + std::to_string(line_no) + ": candidate '" + tok +
                        "' missing -0/-1 label suffix");
      }
      imp.candidates.emplace_back(tok.substr(0, dash), tok[dash + 1] == '1' ? 1 : 0);
    }
    if (imp.candidates.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": impression has no candidates");
    }
    impressions.push_back(std::move(imp));
  }
  return impressions;
}

namespace {

Vocabulary vocab_from_counts(const std::map<std::string, long long>& counts, int min_freq) {
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_freq) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size() + 2);
  tokens.push_back("<pad>");
  tokens.push_back("<unk>");
  for (auto& [tok, n] : kept) tokens.push_back(std::move(tok));
  return Vocabulary::from_tokens(std::move(tokens));
}

}  // namespace

Vocabularies build_vocabularies(const std::vector<NewsRecord>& records, int min_token_freq) {
  std::map<std::string, long long> words, topics, subtopics;
  for (const auto& rec : records) {
    for (const auto& t : rec.title) ++words[t];
    for (const auto& t : rec.abstract) ++words[t];
    ++topics[rec.topic];
    ++subtopics[rec.subtopic];
  }
  Vocabularies v;
  v.words = vocab_from_counts(words, min_token_freq);
  v.topics = vocab_from_counts(topics, 1);
  v.subtopics = vocab_from_counts(subtopics, 1);
  return v;
}

TensorPtr load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab,
                                     int dim, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path);

  const int v = vocab.size();
  auto table = zeros({v, dim});
  std::vector<bool> filled(static_cast<std::size_t>(v), false);
  filled[Vocabulary::kPadId] = true;  // padding row stays zero

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    int id = vocab.id_of(word);
    if (id == Vocabulary::kUnknownId || filled[static_cast<std::size_t>(id)]) {
      // still validate the row width so a wrong-dimension file fails fast
      int count = 0;
      double f;
      while (is >> f) ++count;
      if (count != dim) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": embedding width " +
                          std::to_string(count) + " does not match dim " + std::to_string(dim));
      }
      continue;
    }
    for (int j = 0; j < dim; ++j) {
      double f;
      if (!(is >> f)) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": embedding width " +
                          std::to_string(j) + " does not match dim " + std::to_string(dim));
      }
      table->at(id, j) = f;
    }
    double extra;
    if (is >> extra) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": embedding width exceeds dim " + std::to_string(dim));
    }
    filled[static_cast<std::size_t>(id)] = true;
  }

  // Rows absent from the file (including <unk>) in id order, so the values
  // do not depend on file ordering.
  Rng rng(seed);
  for (int id = 1; id < v; ++id) {
    if (filled[static_cast<std::size_t>(id)]) continue;
    for (int j = 0; j < dim; ++j) table->at(id, j) = rng.uniform(-0.1, 0.1);
  }
  return table;
}

TensorPtr random_embeddings(int vocab_size, int dim, std::uint64_t seed) {
  auto table = zeros({vocab_size, dim});
  Rng rng(seed);
  for (int id = 1; id < vocab_size; ++id)
    for (int j = 0; j < dim; ++j) table->at(id, j) = rng.uniform(-0.1, 0.1);
  return table;
}

namespace {

void encode_text(const std::vector<std::string>& tokens, const Vocabulary& vocab, int max_len,
                 std::vector<int>& ids, std::vector<bool>& mask) {
  ids.assign(static_cast<std::size_t>(max_len), Vocabulary::kPadId);
  mask.assign(static_cast<std::size_t>(max_len), false);
  const int n = std::min(max_len, static_cast<int>(tokens.size()));  // keep the first tokens
  for (int i = 0; i < n; ++i) {
    ids[static_cast<std::size_t>(i)] = vocab.id_of(tokens[static_cast<std::size_t>(i)]);
    mask[static_cast<std::size_t>(i)] = true;
  }
}

}  // namespace

EncodedCorpus encode_corpus(const std::vector<NewsRecord>& records, const Vocabularies& vocabs,
                            int title_len, int abstract_len) {
  EncodedCorpus corpus;
  corpus.word_vocab = vocabs.words.size();
  corpus.topic_vocab = vocabs.topics.size();
  corpus.subtopic_vocab = vocabs.subtopics.size();
  corpus.ids.reserve(records.size());
  corpus.news.reserve(records.size());
  for (const auto& rec : records) {
    EncodedNews en;
    encode_text(rec.title, vocabs.words, title_len, en.title_ids, en.title_mask);
    encode_text(rec.abstract, vocabs.words, abstract_len, en.abstract_ids, en.abstract_mask);
    en.topic_id = vocabs.topics.id_of(rec.topic);
    en.subtopic_id = vocabs.subtopics.id_of(rec.subtopic);
    en.has_title = !rec.title.empty();
    en.has_abstract = !rec.abstract.empty();
    corpus.index[rec.news_id] = static_cast<int>(corpus.news.size());
    corpus.ids.push_back(rec.news_id);
    corpus.news.push_back(std::move(en));
  }
  return corpus;
}

int EncodedCorpus::index_of(const std::string& news_id) const {
  auto it = index.find(news_id);
  if (it == index.end()) throw DataError("news id not in corpus: " + news_id);
  return it->second;
}

SessionBatch build_batch(const std::vector<Impression>& impressions, const EncodedCorpus& corpus,
                         int max_history, int negatives, BatchMode mode, Rng& rng) {
  SessionBatch batch;
  for (const auto& imp : impressions) {
    // most recent max_history clicks, left-padded
    std::vector<int> history(static_cast<std::size_t>(max_history), -1);
    std::vector<bool> history_mask(static_cast<std::size_t>(max_history), false);
    const int n = std::min(max_history, static_cast<int>(imp.history.size()));
    for (int i = 0; i < n; ++i) {
      const auto& id = imp.history[imp.history.size() - static_cast<std::size_t>(n - i)];
      history[static_cast<std::size_t>(max_history - n + i)] = corpus.index_of(id);
      history_mask[static_cast<std::size_t>(max_history - n + i)] = true;
    }

    if (mode == BatchMode::Eval) {
      SessionExample ex;
      ex.impression_id = imp.impression_id;
      ex.history = history;
      ex.history_mask = history_mask;
      for (const auto& [id, label] : imp.candidates) {
        ex.candidates.push_back(corpus.index_of(id));
        ex.labels.push_back(label);
      }
      batch.examples.push_back(std::move(ex));
      continue;
    }

    std::vector<int> positives, pool;
    for (const auto& [id, label] : imp.candidates) {
      (label == 1 ? positives : pool).push_back(corpus.index_of(id));
    }
    if (positives.empty()) {
      ++batch.skipped_no_positive;
      continue;
    }
    if (pool.empty()) {
      ++batch.skipped_no_negative;
      continue;
    }
    for (int pos : positives) {
      SessionExample ex;
      ex.impression_id = imp.impression_id;
      ex.history = history;
      ex.history_mask = history_mask;
      ex.candidates.push_back(pos);
      ex.labels.push_back(1);
      if (static_cast<int>(pool.size()) >= negatives) {
        std::vector<int> shuffled = pool;
        rng.shuffle(shuffled);
        for (int i = 0; i < negatives; ++i) {
          ex.candidates.push_back(shuffled[static_cast<std::size_t>(i)]);
          ex.labels.push_back(0);
        }
      } else {
        for (int i = 0; i < negatives; ++i) {
          ex.candidates.push_back(pool[static_cast<std::size_t>(rng.uniform_int(
              static_cast<int>(pool.size())))]);
          ex.labels.push_back(0);
        }
      }
      batch.examples.push_back(std::move(ex));
    }
  }
  return batch;
}

}  // namespace mins
