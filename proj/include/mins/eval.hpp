#pragma once

#include <string>
#include <vector>

#include "mins/data.hpp"
#include "mins/model.hpp"

namespace mins {

// Scores and binary labels for one impression's candidate list.
struct RankingResult {
  std::string impression_id;
  std::vector<double> scores;
  std::vector<int> labels;
};

// Probability that a random positive outscores a random negative; ties count
// one half. Needs at least one candidate of each class.
double auc(const RankingResult& r);

// Mean reciprocal rank over the positives; candidates are ranked by
// descending score, ties broken by original index.
double mrr(const RankingResult& r);

// DCG@k / IDCG@k with gain = label and discount 1/log2(rank+1).
double ndcg_at_k(const RankingResult& r, int k);

// Candidate indices ordered by descending score, ties broken by original
// index; the ranking used by mrr, ndcg_at_k, and prediction output.
std::vector<int> ranked_indices(const RankingResult& r);

struct MetricsReport {
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  int evaluated = 0;
  int skipped_no_positive = 0;
  int skipped_no_negative = 0;

  std::string json() const;   // one-line record
  std::string table() const;  // aligned text block
};

// Scores every example's candidates, computing each distinct news vector
// once. Labels are carried through unchanged.
std::vector<RankingResult> score_impressions(const ModelParams& model, const EncodedCorpus& corpus,
                                             const std::vector<SessionExample>& examples,
                                             const PartSelection& parts = {});

// Macro-averaged metrics over the scoreable impressions, those with at least
// one positive and one negative candidate; the rest are counted, not scored.
MetricsReport evaluate(const ModelParams& model, const EncodedCorpus& corpus,
                       const std::vector<SessionExample>& examples,
                       const PartSelection& parts = {});

}  // namespace mins
