#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mins/data.hpp"
#include "mins/error.hpp"
#include "mins/eval.hpp"
#include "mins/model.hpp"
#include "mins/rng.hpp"

using namespace mins;

namespace {

constexpr double kTol = 1e-12;

RankingResult rr(std::vector<double> scores, std::vector<int> labels) {
  return {"imp", std::move(scores), std::move(labels)};
}

// Literal definitions of the metrics, written as the formulas read, with no
// shared machinery with the library implementations.
double auc_brute(const RankingResult& r) {
  double wins = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    if (r.labels[i] != 1) continue;
    for (std::size_t j = 0; j < r.labels.size(); ++j) {
      if (r.labels[j] != 0) continue;
      ++pairs;
      if (r.scores[i] > r.scores[j]) wins += 1.0;
      else if (r.scores[i] == r.scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

std::vector<int> order_brute(const RankingResult& r) {
  std::vector<int> idx(r.scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return r.scores[a] > r.scores[b]; });
  return idx;
}

double mrr_brute(const RankingResult& r) {
  auto idx = order_brute(r);
  double total = 0.0;
  int positives = 0;
  for (std::size_t rank = 0; rank < idx.size(); ++rank) {
    if (r.labels[static_cast<std::size_t>(idx[rank])] == 1) {
      total += 1.0 / static_cast<double>(rank + 1);
      ++positives;
    }
  }
  return total / positives;
}

double ndcg_brute(const RankingResult& r, int k) {
  auto idx = order_brute(r);
  double dcg = 0.0;
  for (int rank = 0; rank < std::min<int>(k, static_cast<int>(idx.size())); ++rank) {
    dcg += r.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(rank)])] /
           std::log2(static_cast<double>(rank + 2));
  }
  int positives = 0;
  for (int l : r.labels) positives += l;
  double idcg = 0.0;
  for (int rank = 0; rank < std::min(k, positives); ++rank) {
    idcg += 1.0 / std::log2(static_cast<double>(rank + 2));
  }
  return dcg / idcg;
}

}  // namespace

TEST_CASE("auc on small hand-checked cases") {
  CHECK(auc(rr({0.9, 0.1}, {1, 0})) == doctest::Approx(1.0).epsilon(kTol));
  CHECK(auc(rr({0.1, 0.9}, {1, 0})) == doctest::Approx(0.0).epsilon(kTol));
  CHECK(auc(rr({0.5, 0.5}, {1, 0})) == doctest::Approx(0.5).epsilon(kTol));
  // positive beats one negative, ties the other: (1 + 0.5)/2
  CHECK(auc(rr({0.7, 0.7, 0.2}, {1, 0, 0})) == doctest::Approx(0.75).epsilon(kTol));
}

TEST_CASE("mrr on small hand-checked cases") {
  CHECK(mrr(rr({0.9, 0.5, 0.1}, {0, 1, 0})) == doctest::Approx(0.5).epsilon(kTol));
  // positives at ranks 1 and 3: (1 + 1/3)/2
  CHECK(mrr(rr({0.9, 0.5, 0.1}, {1, 0, 1})) == doctest::Approx((1.0 + 1.0 / 3) / 2).epsilon(kTol));
  // tie resolved by original index: the positive sits at rank 2
  CHECK(mrr(rr({0.5, 0.5}, {0, 1})) == doctest::Approx(0.5).epsilon(kTol));
}

TEST_CASE("ndcg on small hand-checked cases") {
  // perfect ranking: dcg = idcg
  CHECK(ndcg_at_k(rr({0.9, 0.5, 0.1}, {1, 1, 0}), 5) == doctest::Approx(1.0).epsilon(kTol));
  // single positive at rank 3 of 3: 1/log2(4) over ideal 1/log2(2)
  CHECK(ndcg_at_k(rr({0.9, 0.5, 0.1}, {0, 0, 1}), 5) ==
        doctest::Approx((1.0 / 2.0) / 1.0).epsilon(kTol));
  // cutoff hides the rank-3 positive entirely
  CHECK(ndcg_at_k(rr({0.9, 0.5, 0.1}, {0, 0, 1}), 2) == doctest::Approx(0.0).epsilon(kTol));
  // more positives than the cutoff: ideal gain is also truncated at k
  CHECK(ndcg_at_k(rr({0.9, 0.5}, {1, 1}), 1) == doctest::Approx(1.0).epsilon(kTol));
}

TEST_CASE("metric edge cases raise the documented errors") {
  CHECK_THROWS_AS(auc(rr({0.5, 0.6}, {1, 1})), DegenerateInputError);
  CHECK_THROWS_AS(auc(rr({0.5, 0.6}, {0, 0})), DegenerateInputError);
  CHECK_THROWS_AS(mrr(rr({0.5, 0.6}, {0, 0})), DegenerateInputError);
  CHECK_THROWS_AS(ndcg_at_k(rr({0.5, 0.6}, {0, 0}), 5), DegenerateInputError);
  CHECK_THROWS_AS(ndcg_at_k(rr({0.5, 0.6}, {1, 0}), 0), std::invalid_argument);
  CHECK_THROWS_AS(auc(rr({0.5}, {1, 0})), std::invalid_argument);  // length mismatch
  CHECK_THROWS_AS(auc(rr({0.5, 0.6}, {1, 2})), std::invalid_argument);
  CHECK_THROWS_AS(auc(rr({}, {})), std::invalid_argument);
}

TEST_CASE("metrics agree with brute-force formulas on random impressions") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(19));
    RankingResult r;
    r.impression_id = "t" + std::to_string(trial);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      // quantized scores make ties common
      r.scores.push_back(std::floor(rng.uniform(-2, 2) * 4.0) / 4.0);
      const int label = rng.uniform() < 0.3 ? 1 : 0;
      r.labels.push_back(label);
      (label ? has_pos : has_neg) = true;
    }
    if (!has_pos) r.labels[0] = 1;
    if (!has_neg) r.labels[static_cast<std::size_t>(n) - 1] = 0;

    CHECK(auc(r) == doctest::Approx(auc_brute(r)).epsilon(kTol));
    CHECK(mrr(r) == doctest::Approx(mrr_brute(r)).epsilon(kTol));
    CHECK(ndcg_at_k(r, 5) == doctest::Approx(ndcg_brute(r, 5)).epsilon(kTol));
    CHECK(ndcg_at_k(r, 10) == doctest::Approx(ndcg_brute(r, 10)).epsilon(kTol));
    CHECK(ranked_indices(r) == order_brute(r));
  }
}

TEST_CASE("metrics are invariant under monotone score transforms") {
  Rng rng(7);
  RankingResult r;
  for (int i = 0; i < 12; ++i) {
    r.scores.push_back(rng.uniform(-3, 3));
    r.labels.push_back(i % 3 == 0 ? 1 : 0);
  }
  RankingResult t = r;
  for (double& s : t.scores) s = 10.0 * std::tanh(s) + 2.0;

  CHECK(auc(t) == doctest::Approx(auc(r)).epsilon(1e-9));
  CHECK(mrr(t) == doctest::Approx(mrr(r)).epsilon(1e-9));
  CHECK(ndcg_at_k(t, 5) == doctest::Approx(ndcg_at_k(r, 5)).epsilon(1e-9));
  CHECK(ranked_indices(t) == ranked_indices(r));
}

TEST_CASE("negating tie-free scores complements the auc") {
  Rng rng(13);
  RankingResult r;
  for (int i = 0; i < 10; ++i) {
    r.scores.push_back(rng.uniform(-1, 1));  // continuous, ties improbable
    r.labels.push_back(i < 4 ? 1 : 0);
  }
  RankingResult neg = r;
  for (double& s : neg.scores) s = -s;
  CHECK(auc(r) + auc(neg) == doctest::Approx(1.0).epsilon(1e-9));
}

namespace {

struct EvalFixture {
  std::vector<NewsRecord> records;
  EncodedCorpus corpus;
  ModelParams model;
  EvalFixture() {
    for (int i = 1; i <= 6; ++i) {
      records.push_back({"N" + std::to_string(i), "t" + std::to_string(i % 2), "s",
                         {"w" + std::to_string(i), "x" + std::to_string(i)},
                         {}});
    }
    auto vocabs = build_vocabularies(records, 1);
    corpus = encode_corpus(records, vocabs, 2, 2);
    ModelDims dims;
    dims.vocab = corpus.word_vocab;
    dims.dim = 4;
    dims.encoder_heads = 2;
    dims.channels = 2;
    dims.topic_vocab = corpus.topic_vocab;
    dims.subtopic_vocab = corpus.subtopic_vocab;
    dims.topic_dim = 2;
    Rng rng(31);
    model = init_params(dims, random_embeddings(dims.vocab, dims.dim, 1), rng);
  }

  SessionExample example(std::vector<std::string> history, std::vector<std::string> cands,
                         std::vector<int> labels, const std::string& id) const {
    SessionExample ex;
    ex.impression_id = id;
    for (const auto& h : history) {
      ex.history.push_back(corpus.index_of(h));
      ex.history_mask.push_back(true);
    }
    for (const auto& c : cands) ex.candidates.push_back(corpus.index_of(c));
    ex.labels = std::move(labels);
    return ex;
  }
};

}  // namespace

TEST_CASE("impression scoring matches per-example scores") {
  EvalFixture f;
  std::vector<SessionExample> examples = {
      f.example({"N1", "N2"}, {"N3", "N4"}, {1, 0}, "a"),
      f.example({"N5"}, {"N1", "N2", "N6"}, {0, 1, 0}, "b"),
  };
  auto results = score_impressions(f.model, f.corpus, examples);
  REQUIRE(results.size() == 2);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    CHECK(results[i].impression_id == examples[i].impression_id);
    CHECK(results[i].labels == examples[i].labels);
    auto direct = score_example(f.model, f.corpus, examples[i]);
    REQUIRE(results[i].scores.size() == direct.size());
    for (std::size_t j = 0; j < direct.size(); ++j) {
      CHECK(results[i].scores[j] == doctest::Approx(direct[j]).epsilon(kTol));
    }
  }
}

TEST_CASE("evaluation macro-averages the scoreable impressions") {
  EvalFixture f;
  std::vector<SessionExample> examples = {
      f.example({"N1"}, {"N2", "N3"}, {1, 0}, "a"),
      f.example({"N2"}, {"N4", "N5"}, {0, 1}, "b"),
      f.example({"N3"}, {"N4", "N5"}, {0, 0}, "no-positive"),
      f.example({"N4"}, {"N1", "N6"}, {1, 1}, "no-negative"),
  };
  auto report = evaluate(f.model, f.corpus, examples);
  CHECK(report.evaluated == 2);
  CHECK(report.skipped_no_positive == 1);
  CHECK(report.skipped_no_negative == 1);

  auto results = score_impressions(f.model, f.corpus, examples);
  CHECK(report.auc == doctest::Approx((auc(results[0]) + auc(results[1])) / 2).epsilon(kTol));
  CHECK(report.mrr == doctest::Approx((mrr(results[0]) + mrr(results[1])) / 2).epsilon(kTol));
  CHECK(report.ndcg5 ==
        doctest::Approx((ndcg_at_k(results[0], 5) + ndcg_at_k(results[1], 5)) / 2).epsilon(kTol));

  CHECK(report.auc >= 0.0);
  CHECK(report.auc <= 1.0);
  CHECK(report.mrr >= 0.0);
  CHECK(report.mrr <= 1.0);
  CHECK(report.ndcg5 >= 0.0);
  CHECK(report.ndcg5 <= 1.0);
}

TEST_CASE("evaluation with nothing scoreable is an error") {
  EvalFixture f;
  std::vector<SessionExample> examples = {
      f.example({"N1"}, {"N2", "N3"}, {0, 0}, "a"),
  };
  CHECK_THROWS_AS(evaluate(f.model, f.corpus, examples), DataError);
  CHECK_THROWS_AS(evaluate(f.model, f.corpus, {}), DataError);
}

TEST_CASE("report serialization carries all fields") {
  MetricsReport report;
  report.auc = 0.625;
  report.mrr = 0.5;
  report.ndcg5 = 0.25;
  report.ndcg10 = 0.125;
  report.evaluated = 7;
  report.skipped_no_positive = 2;
  report.skipped_no_negative = 1;

  auto j = report.json();
  CHECK(j.find("\"auc\":0.625") != std::string::npos);
  CHECK(j.find("\"evaluated\":7") != std::string::npos);
  CHECK(j.find('\n') == std::string::npos);

  auto t = report.table();
  CHECK(t.find("auc") != std::string::npos);
  CHECK(t.find("ndcg@10") != std::string::npos);
  CHECK(t.find("0.625") != std::string::npos);
}
