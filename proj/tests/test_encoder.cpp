#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mins/encoder.hpp"
#include "mins/error.hpp"
#include "mins/model.hpp"
#include "mins/ops.hpp"
#include "mins/rng.hpp"
#include "mins/tensor.hpp"

using namespace mins;

namespace {

constexpr double kTol = 1e-12;
constexpr double kGradTol = 1e-6;
constexpr double kStep = 1e-5;

AdditiveAttentionParams identity_pool(int d) {
  std::vector<double> eye(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) eye[static_cast<std::size_t>(i) * d + i] = 1.0;
  return {tensor({d, d}, eye), zeros({d}), zeros({d})};
}

}  // namespace

TEST_CASE("additive attention with a zero query averages the unmasked rows") {
  auto rows = tensor({3, 2}, {1, 2, 3, 4, 5, 6});
  auto pool = identity_pool(2);

  auto all = additive_attention(rows, nullptr, pool);
  CHECK(all->values[0] == doctest::Approx(3.0).epsilon(kTol));
  CHECK(all->values[1] == doctest::Approx(4.0).epsilon(kTol));

  std::vector<bool> mask = {true, false, true};
  auto some = additive_attention(rows, &mask, pool);
  CHECK(some->values[0] == doctest::Approx(3.0).epsilon(kTol));
  CHECK(some->values[1] == doctest::Approx(4.0).epsilon(kTol));
}

TEST_CASE("additive attention over a single row returns that row") {
  auto rows = tensor({1, 3}, {0.5, -2.0, 7.0});
  AdditiveAttentionParams pool{tensor({3, 2}, {1, -1, 0.5, 2, 0, 1}),
                               tensor1d({0.1, -0.2}), tensor1d({3, -4})};
  auto out = additive_attention(rows, nullptr, pool);
  CHECK(out->values[0] == 0.5);
  CHECK(out->values[1] == -2.0);
  CHECK(out->values[2] == 7.0);
}

TEST_CASE("additive attention matches a two-row hand computation") {
  auto rows = tensor({2, 2}, {1, 0, 0, 1});
  AdditiveAttentionParams pool{tensor({2, 2}, {1, 0, 0, 1}), tensor1d({0.5, -0.5}),
                               tensor1d({1, 2})};
  auto out = additive_attention(rows, nullptr, pool);

  const double s0 = std::tanh(1.5) + 2.0 * std::tanh(-0.5);
  const double s1 = std::tanh(0.5) + 2.0 * std::tanh(0.5);
  const double w0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
  // result = w0·[1,0] + (1−w0)·[0,1]
  CHECK(out->values[0] == doctest::Approx(w0).epsilon(kTol));
  CHECK(out->values[1] == doctest::Approx(1.0 - w0).epsilon(kTol));
}

namespace {

// Two heads whose value maps slice the input columns and an identity output
// map, so with zero query weights the unmasked output rows are exactly the
// column means of the unmasked input rows.
SelfAttentionParams mean_attention() {
  SelfAttentionParams params;
  for (int h = 0; h < 2; ++h) {
    std::vector<double> value(8, 0.0);
    value[static_cast<std::size_t>(2 * h) * 2 + 0] = 1.0;
    value[static_cast<std::size_t>(2 * h + 1) * 2 + 1] = 1.0;
    params.heads.push_back({zeros({4, 2}), zeros({4, 2}), tensor({4, 2}, value)});
  }
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[static_cast<std::size_t>(i) * 4 + i] = 1.0;
  params.output = tensor({4, 4}, eye);
  return params;
}

SelfAttentionParams random_attention(Rng& rng, int d, int n_heads) {
  auto fill = [&rng](int r, int c) {
    std::vector<double> v(static_cast<std::size_t>(r) * c);
    for (double& x : v) x = rng.uniform(-0.5, 0.5);
    return tensor({r, c}, v);
  };
  SelfAttentionParams params;
  const int dh = d / n_heads;
  for (int h = 0; h < n_heads; ++h) params.heads.push_back({fill(d, dh), fill(d, dh), fill(d, dh)});
  params.output = fill(d, d);
  return params;
}

}  // namespace

TEST_CASE("self attention with uniform weights averages the unmasked values") {
  auto x = tensor({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  std::vector<bool> mask = {true, true, false};
  auto out = self_attend_text(x, mask, mean_attention());
  const double expected[4] = {3, 4, 5, 6};  // mean of the first two rows
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) CHECK(out->at(i, j) == doctest::Approx(expected[j]).epsilon(kTol));
  }
  for (int j = 0; j < 4; ++j) CHECK(out->at(2, j) == 0.0);  // masked query row
}

TEST_CASE("masked positions neither attend nor are attended to") {
  Rng rng(11);
  auto params = random_attention(rng, 4, 2);
  std::vector<bool> mask = {true, false, true};

  auto x1 = tensor({3, 4}, {1, 2, 3, 4, 0, 0, 0, 0, -1, 0.5, 2, -3});
  auto x2 = tensor({3, 4}, {1, 2, 3, 4, 99, -99, 42, 7, -1, 0.5, 2, -3});
  auto out1 = self_attend_text(x1, mask, params);
  auto out2 = self_attend_text(x2, mask, params);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) CHECK(out1->at(i, j) == doctest::Approx(out2->at(i, j)).epsilon(kTol));
  }
  for (int j = 0; j < 4; ++j) CHECK(out1->at(1, j) == 0.0);
}

TEST_CASE("identical heads produce identical output halves") {
  Rng rng(5);
  auto params = random_attention(rng, 4, 2);
  params.heads[1] = params.heads[0];
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[static_cast<std::size_t>(i) * 4 + i] = 1.0;
  params.output = tensor({4, 4}, eye);

  auto x = tensor({2, 4}, {1, -2, 0.5, 3, 0.25, 1, -1, 2});
  std::vector<bool> mask = {true, true};
  auto out = self_attend_text(x, mask, params);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(out->at(i, j) == doctest::Approx(out->at(i, j + 2)).epsilon(kTol));
  }
}

TEST_CASE("self attention rejects bad head counts and empty masks") {
  Rng rng(2);
  auto x = tensor({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK_THROWS_AS(self_attend_text(x, {true, true}, random_attention(rng, 4, 3)), ConfigError);
  CHECK_THROWS_AS(self_attend_text(x, {false, false}, random_attention(rng, 4, 2)),
                  DegenerateInputError);
}

TEST_CASE("topic encoding is a looked-up embedding through a linear map") {
  TopicEncoderParams params{tensor({3, 2}, {0, 0, 1, 2, 3, 4}),
                            tensor({2, 2}, {1, 1, 0, 1}), tensor1d({0.5, -0.5})};
  auto out = encode_topic(2, params);
  CHECK(out->values[0] == doctest::Approx(7.5).epsilon(kTol));
  CHECK(out->values[1] == doctest::Approx(3.5).epsilon(kTol));

  auto pad = encode_topic(0, params);  // zero row: bias only
  CHECK(pad->values[0] == 0.5);
  CHECK(pad->values[1] == -0.5);
}

namespace {

struct EncoderFixture {
  ModelDims dims;
  ModelParams model;
  EncodedNews news;
  EncoderFixture() {
    dims.vocab = 6;
    dims.dim = 4;
    dims.encoder_heads = 2;
    dims.channels = 2;
    dims.topic_vocab = 3;
    dims.subtopic_vocab = 3;
    dims.topic_dim = 2;
    Rng rng(17);
    model = init_params(dims, random_embeddings(dims.vocab, dims.dim, 4), rng);
    news.title_ids = {2, 3, 0};
    news.title_mask = {true, true, false};
    news.abstract_ids = {4, 5};
    news.abstract_mask = {true, true};
    news.topic_id = 1;
    news.subtopic_id = 2;
    news.has_title = true;
    news.has_abstract = true;
  }
};

}  // namespace

TEST_CASE("news encoding fuses parts inside their coordinate-wise hull") {
  EncoderFixture f;
  const auto& enc = f.model.encoder;

  auto title_tokens = embedding_lookup(enc.word_embeddings, f.news.title_ids);
  auto title = additive_attention(self_attend_text(title_tokens, f.news.title_mask, enc.title_attention),
                                  &f.news.title_mask, enc.title_pool);
  auto abstract_tokens = embedding_lookup(enc.word_embeddings, f.news.abstract_ids);
  auto abstract = additive_attention(
      self_attend_text(abstract_tokens, f.news.abstract_mask, enc.abstract_attention),
      &f.news.abstract_mask, enc.abstract_pool);
  auto topic = encode_topic(f.news.topic_id, enc.topic);
  auto subtopic = encode_topic(f.news.subtopic_id, enc.subtopic);

  auto fused = encode_news(f.news, enc);
  for (int j = 0; j < 4; ++j) {
    double lo = std::min(std::min(title->values[j], abstract->values[j]),
                         std::min(topic->values[j], subtopic->values[j]));
    double hi = std::max(std::max(title->values[j], abstract->values[j]),
                         std::max(topic->values[j], subtopic->values[j]));
    CHECK(fused->values[j] >= lo - kTol);
    CHECK(fused->values[j] <= hi + kTol);
  }
}

TEST_CASE("selecting a single part bypasses the fusion") {
  EncoderFixture f;
  const auto& enc = f.model.encoder;
  auto only_title = encode_news(f.news, enc, {true, false, false});

  auto tokens = embedding_lookup(enc.word_embeddings, f.news.title_ids);
  auto expected = additive_attention(self_attend_text(tokens, f.news.title_mask, enc.title_attention),
                                     &f.news.title_mask, enc.title_pool);
  for (int j = 0; j < 4; ++j) {
    CHECK(only_title->values[j] == doctest::Approx(expected->values[j]).epsilon(kTol));
  }
}

TEST_CASE("token ids under the padding mask do not affect the encoding") {
  EncoderFixture f;
  auto a = encode_news(f.news, f.model.encoder);
  EncodedNews altered = f.news;
  altered.title_ids[2] = 5;  // masked position
  auto b = encode_news(altered, f.model.encoder);
  for (int j = 0; j < 4; ++j) CHECK(a->values[j] == doctest::Approx(b->values[j]).epsilon(kTol));
}

TEST_CASE("missing text parts fall back to the remaining ones or fail") {
  EncoderFixture f;
  EncodedNews no_abstract = f.news;
  no_abstract.has_abstract = false;
  std::fill(no_abstract.abstract_mask.begin(), no_abstract.abstract_mask.end(), false);
  CHECK_NOTHROW(encode_news(no_abstract, f.model.encoder));

  EncodedNews no_text = no_abstract;
  no_text.has_title = false;
  std::fill(no_text.title_mask.begin(), no_text.title_mask.end(), false);
  CHECK_THROWS_AS(encode_news(no_text, f.model.encoder), DegenerateInputError);

  // selecting only the abstract of a title-only item is equally degenerate
  CHECK_THROWS_AS(encode_news(no_abstract, f.model.encoder, {false, true, true}),
                  DegenerateInputError);
}

TEST_CASE("gradients flow through the full news encoding") {
  EncoderFixture f;
  // fresh ±0.1 embeddings make the attention near-uniform and the pool
  // gradients vanish below fd resolution; scale to O(1) for conditioning
  for (double& v : f.model.encoder.word_embeddings->values) v *= 10.0;
  for (auto& t : f.model.named()) t->set_requires_grad(true);

  // a generic covector keeps the loss sensitive in every direction; an
  // all-ones probe can sit in a softmax null space and drown in fd noise
  auto probe = tensor1d({0.3, -1.1, 0.7, 2.0});
  auto loss_of = [&f, &probe](const TensorPtr&) {
    return dot(encode_news(f.news, f.model.encoder), probe);
  };
  CHECK(grad_check(loss_of, f.model.encoder.word_embeddings, kStep) < kGradTol);
  CHECK(grad_check(loss_of, f.model.encoder.title_pool.query, kStep) < kGradTol);
  CHECK(grad_check(loss_of, f.model.encoder.title_attention.heads[0].key, kStep) < kGradTol);
  CHECK(grad_check(loss_of, f.model.encoder.topic.weight, kStep) < kGradTol);
  CHECK(grad_check(loss_of, f.model.encoder.fusion_pool.proj, kStep) < kGradTol);
}
