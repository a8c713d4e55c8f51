#include "mins/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mins/error.hpp"
#include "mins/head.hpp"
#include "mins/ops.hpp"
#include "mins/pin.hpp"

namespace mins {

namespace {

struct ClassCounts {
  int positives = 0;
  int negatives = 0;
};

ClassCounts check_result(const RankingResult& r) {
  if (r.scores.size() != r.labels.size()) {
    throw std::invalid_argument("ranking result: " + std::to_string(r.scores.size()) +
                                " scores vs " + std::to_string(r.labels.size()) + " labels");
  }
  if (r.scores.empty()) throw std::invalid_argument("ranking result: no candidates");
  ClassCounts c;
  for (int label : r.labels) {
    if (label == 1) {
      ++c.positives;
    } else if (label == 0) {
      ++c.negatives;
    } else {
      throw std::invalid_argument("ranking result: label " + std::to_string(label) +
                                  " is not binary");
    }
  }
  return c;
}

}  // namespace

std::vector<int> ranked_indices(const RankingResult& r) {
  std::vector<int> order(r.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return r.scores[a] > r.scores[b]; });
  return order;
}

double auc(const RankingResult& r) {
  ClassCounts c = check_result(r);
  if (c.positives == 0 || c.negatives == 0) {
    throw DegenerateInputError("auc: needs a positive and a negative, impression " +
                               r.impression_id);
  }

  // Mann-Whitney via average ranks: tied scores share the mean of the rank
  // positions they occupy, which counts each tied pair exactly one half.
  std::vector<int> order(r.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return r.scores[a] < r.scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && r.scores[order[j]] == r.scores[order[i]]) ++j;
    const double mean_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) {
      if (r.labels[order[t]] == 1) positive_rank_sum += mean_rank;
    }
    i = j;
  }
  const double p = c.positives;
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(c.negatives));
}

double mrr(const RankingResult& r) {
  ClassCounts c = check_result(r);
  if (c.positives == 0) {
    throw DegenerateInputError("mrr: no positive candidate, impression " + r.impression_id);
  }
  auto order = ranked_indices(r);
  double total = 0.0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (r.labels[order[pos]] == 1) total += 1.0 / static_cast<double>(pos + 1);
  }
  return total / c.positives;
}

double ndcg_at_k(const RankingResult& r, int k) {
  if (k <= 0) throw std::invalid_argument("ndcg: cutoff must be positive");
  ClassCounts c = check_result(r);
  if (c.positives == 0) {
    throw DegenerateInputError("ndcg: no positive candidate, impression " + r.impression_id);
  }
  auto order = ranked_indices(r);
  const int cutoff = std::min<int>(k, static_cast<int>(order.size()));
  double dcg = 0.0;
  for (int pos = 0; pos < cutoff; ++pos) {
    dcg += r.labels[order[pos]] / std::log2(pos + 2.0);
  }
  double idcg = 0.0;
  for (int pos = 0; pos < std::min(k, c.positives); ++pos) idcg += 1.0 / std::log2(pos + 2.0);
  return dcg / idcg;
}

std::string MetricsReport::json() const {
  nlohmann::json j;
  j["auc"] = auc;
  j["mrr"] = mrr;
  j["ndcg5"] = ndcg5;
  j["ndcg10"] = ndcg10;
  j["evaluated"] = evaluated;
  j["skipped_no_positive"] = skipped_no_positive;
  j["skipped_no_negative"] = skipped_no_negative;
  return j.dump();
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(10) << "auc" << auc << '\n';
  os << std::left << std::setw(10) << "mrr" << mrr << '\n';
  os << std::left << std::setw(10) << "ndcg@5" << ndcg5 << '\n';
  os << std::left << std::setw(10) << "ndcg@10" << ndcg10 << '\n';
  os << std::left << std::setw(10) << "evaluated" << evaluated;
  if (skipped_no_positive > 0 || skipped_no_negative > 0) {
    os << "  (skipped: " << skipped_no_positive << " without positives, " << skipped_no_negative
       << " without negatives)";
  }
  os << '\n';
  return os.str();
}

std::vector<RankingResult> score_impressions(const ModelParams& model, const EncodedCorpus& corpus,
                                             const std::vector<SessionExample>& examples,
                                             const PartSelection& parts) {
  NoTape off;

  std::vector<TensorPtr> cache(corpus.news.size());
  auto cached_vector = [&](int idx) -> const TensorPtr& {
    auto& slot = cache[static_cast<std::size_t>(idx)];
    if (!slot) slot = news_vector(model, corpus.news[static_cast<std::size_t>(idx)], parts);
    return slot;
  };

  std::vector<RankingResult> results;
  results.reserve(examples.size());
  for (const auto& example : examples) {
    std::vector<TensorPtr> clicked;
    for (std::size_t i = 0; i < example.history.size(); ++i) {
      if (example.history_mask[i]) clicked.push_back(cached_vector(example.history[i]));
    }
    TensorPtr session;
    if (clicked.empty()) {
      session = zeros({model.dims.dim});
    } else {
      std::vector<bool> live(clicked.size(), true);
      session = session_vector(stack_rows(clicked), live, model.pin);
    }

    RankingResult r;
    r.impression_id = example.impression_id;
    r.labels = example.labels;
    r.scores.reserve(example.candidates.size());
    for (int idx : example.candidates) {
      r.scores.push_back(score(session, cached_vector(idx))->item());
    }
    results.push_back(std::move(r));
  }
  return results;
}

MetricsReport evaluate(const ModelParams& model, const EncodedCorpus& corpus,
                       const std::vector<SessionExample>& examples, const PartSelection& parts) {
  MetricsReport report;
  for (const auto& r : score_impressions(model, corpus, examples, parts)) {
    int positives = 0;
    for (int label : r.labels) positives += label == 1 ? 1 : 0;
    const int negatives = static_cast<int>(r.labels.size()) - positives;
    if (positives == 0) {
      ++report.skipped_no_positive;
      continue;
    }
    if (negatives == 0) {
      ++report.skipped_no_negative;
      continue;
    }
    report.auc += auc(r);
    report.mrr += mrr(r);
    report.ndcg5 += ndcg_at_k(r, 5);
    report.ndcg10 += ndcg_at_k(r, 10);
    ++report.evaluated;
  }

  if (report.evaluated == 0) throw DataError("evaluate: no scoreable impressions");
  report.auc /= report.evaluated;
  report.mrr /= report.evaluated;
  report.ndcg5 /= report.evaluated;
  report.ndcg10 /= report.evaluated;
  return report;
}

}  // namespace mins
