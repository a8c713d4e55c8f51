#include "mins/synth.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "mins/error.hpp"
#include "mins/rng.hpp"

namespace mins {

void SynthConfig::validate() const {
  if (num_topics < 1 || vocab_per_topic < 1 || interests_per_session < 1 || sessions < 1 ||
      candidates < 1 || positives < 1 || history_length < 1 || news_per_topic < 1 ||
      title_len < 1) {
    throw ConfigError("synth config: all counts must be at least 1");
  }
  if (abstract_len < 0) throw ConfigError("synth config: abstract length must be non-negative");
  if (title_len > vocab_per_topic) {
    throw ConfigError("synth config: vocabulary too small for requested title length (" +
                      std::to_string(vocab_per_topic) + " tokens per topic, titles need " +
                      std::to_string(title_len) + " distinct)");
  }
  if (candidates <= positives) {
    throw ConfigError("synth config: candidates must exceed positives to leave negatives");
  }
  if (interests_per_session >= num_topics) {
    throw ConfigError("synth config: negatives need at least one topic outside every session");
  }
}

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  SynthData data;

  // disjoint token pools: topic i owns tokens "t<i>w<j>"
  auto pool_token = [](int topic, int j) {
    return "t" + std::to_string(topic) + "w" + std::to_string(j);
  };

  for (int topic = 0; topic < cfg.num_topics; ++topic) {
    std::vector<int> token_order(static_cast<std::size_t>(cfg.vocab_per_topic));
    std::iota(token_order.begin(), token_order.end(), 0);
    for (int item = 0; item < cfg.news_per_topic; ++item) {
      NewsRecord rec;
      rec.news_id = "N" + std::to_string(topic * cfg.news_per_topic + item + 1);
      rec.topic = "topic" + std::to_string(topic);
      rec.subtopic = "sub" + std::to_string(topic);
      rng.shuffle(token_order);
      for (int t = 0; t < cfg.title_len; ++t) {
        rec.title.push_back(pool_token(topic, token_order[static_cast<std::size_t>(t)]));
      }
      for (int t = 0; t < cfg.abstract_len; ++t) {
        rec.abstract.push_back(pool_token(topic, rng.uniform_int(cfg.vocab_per_topic)));
      }
      data.news.push_back(std::move(rec));
    }
  }

  auto news_of_topic = [&](int topic, Rng& r) -> const std::string& {
    const int item = r.uniform_int(cfg.news_per_topic);
    return data.news[static_cast<std::size_t>(topic * cfg.news_per_topic + item)].news_id;
  };

  std::vector<int> all_topics(static_cast<std::size_t>(cfg.num_topics));
  std::iota(all_topics.begin(), all_topics.end(), 0);

  for (int s = 0; s < cfg.sessions; ++s) {
    Impression imp;
    imp.impression_id = "S" + std::to_string(s + 1);
    imp.user_id = "U" + std::to_string(s + 1);

    rng.shuffle(all_topics);
    std::vector<int> session_topics(all_topics.begin(),
                                    all_topics.begin() + cfg.interests_per_session);
    std::vector<int> other_topics(all_topics.begin() + cfg.interests_per_session,
                                  all_topics.end());

    for (int h = 0; h < cfg.history_length; ++h) {
      imp.history.push_back(news_of_topic(session_topics[static_cast<std::size_t>(
                                              h % cfg.interests_per_session)],
                                          rng));
    }

    for (int p = 0; p < cfg.positives; ++p) {
      const int topic = session_topics[static_cast<std::size_t>(
          rng.uniform_int(cfg.interests_per_session))];
      imp.candidates.emplace_back(news_of_topic(topic, rng), 1);
    }
    for (int n = 0; n < cfg.candidates - cfg.positives; ++n) {
      const int topic = other_topics[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(other_topics.size())))];
      imp.candidates.emplace_back(news_of_topic(topic, rng), 0);
    }
    rng.shuffle(imp.candidates);

    data.impressions.push_back(std::move(imp));
  }

  return data;
}

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ' ';
    out += parts[i];
  }
  return out;
}

}  // namespace

void write_news_tsv(const std::vector<NewsRecord>& news, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write news file: " + path);
  for (const auto& rec : news) {
    out << rec.news_id << '\t' << rec.topic << '\t' << rec.subtopic << '\t' << join(rec.title)
        << '\t' << join(rec.abstract) << "\t\t\t\n";
  }
  if (!out) throw DataError("write failed for news file: " + path);
}

void write_behaviors_tsv(const std::vector<Impression>& impressions, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write behaviors file: " + path);
  for (const auto& imp : impressions) {
    out << imp.impression_id << '\t' << imp.user_id << "\t0\t" << join(imp.history) << '\t';
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      if (i) out << ' ';
      out << imp.candidates[i].first << '-' << imp.candidates[i].second;
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for behaviors file: " + path);
}

}  // namespace mins
