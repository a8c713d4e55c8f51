#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mins/error.hpp"
#include "mins/ops.hpp"
#include "mins/rng.hpp"
#include "mins/tensor.hpp"

using namespace mins;

namespace {

TensorPtr random_input(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = zeros(std::move(shape));
  for (auto& v : t->values) v = rng.uniform(lo, hi);
  t->set_requires_grad(true);
  return t;
}

constexpr double kGradTol = 1e-6;
constexpr double kStep = 1e-5;

}  // namespace

TEST_CASE("matmul matches a hand-computed product") {
  auto a = tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = tensor({3, 2}, {7, 8, 9, 10, 11, 12});
  auto c = matmul(a, b);
  CHECK(c->rows() == 2);
  CHECK(c->cols() == 2);
  CHECK(c->at(0, 0) == 58.0);
  CHECK(c->at(0, 1) == 64.0);
  CHECK(c->at(1, 0) == 139.0);
  CHECK(c->at(1, 1) == 154.0);

  CHECK_THROWS_AS(matmul(a, tensor({2, 2}, {1, 2, 3, 4})), ShapeError);
  CHECK_THROWS_AS(matmul(a, tensor1d({1, 2, 3})), ShapeError);
}

TEST_CASE("matvec matches a hand-computed product") {
  auto w = tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  auto x = tensor1d({1, 0, -1});
  auto y = matvec(w, x);
  CHECK(y->rank() == 1);
  CHECK(y->values[0] == -2.0);
  CHECK(y->values[1] == -2.0);
  CHECK_THROWS_AS(matvec(w, tensor1d({1, 2})), ShapeError);
}

TEST_CASE("transpose flips indices") {
  auto a = tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  auto t = transpose(a);
  CHECK(t->rows() == 3);
  CHECK(t->cols() == 2);
  CHECK(t->at(2, 1) == 6.0);
}

TEST_CASE("elementwise ops and broadcast row add") {
  auto a = tensor1d({1, 2, 3});
  auto b = tensor1d({10, 20, 30});
  CHECK(add(a, b)->values == std::vector<double>{11, 22, 33});
  CHECK(sub(b, a)->values == std::vector<double>{9, 18, 27});
  CHECK(mul(a, b)->values == std::vector<double>{10, 40, 90});
  CHECK(scale(a, -2)->values == std::vector<double>{-2, -4, -6});
  CHECK(one_minus(a)->values == std::vector<double>{0, -1, -2});
  CHECK_THROWS_AS(add(a, tensor1d({1})), ShapeError);

  auto m = tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  auto r = add_rowwise(m, tensor1d({10, 20, 30}));
  CHECK(r->at(0, 0) == 11.0);
  CHECK(r->at(1, 2) == 36.0);
  CHECK_THROWS_AS(add_rowwise(m, tensor1d({1, 2})), ShapeError);
}

TEST_CASE("sigmoid and tanh pointwise values") {
  auto x = tensor1d({0.0, 100.0, -100.0});
  auto s = sigmoid(x);
  CHECK(s->values[0] == doctest::Approx(0.5));
  CHECK(s->values[1] == doctest::Approx(1.0));
  CHECK(s->values[2] == doctest::Approx(0.0));
  CHECK(std::isfinite(s->values[1]));
  CHECK(std::isfinite(s->values[2]));

  auto t = tanh(tensor1d({0.0, 1.0}));
  CHECK(t->values[0] == 0.0);
  CHECK(t->values[1] == doctest::Approx(std::tanh(1.0)));
}

TEST_CASE("softmax normalizes, honours masks, and survives large inputs") {
  auto y = softmax(tensor1d({1.0, 2.0, 3.0}));
  double total = y->values[0] + y->values[1] + y->values[2];
  CHECK(total == doctest::Approx(1.0));
  CHECK(y->values[2] > y->values[1]);

  std::vector<bool> mask = {true, false, true};
  auto ym = softmax(tensor1d({1.0, 2.0, 1.0}), &mask);
  CHECK(ym->values[1] == 0.0);
  CHECK(ym->values[0] == doctest::Approx(0.5));
  CHECK(ym->values[2] == doctest::Approx(0.5));

  auto big = softmax(tensor1d({1000.0, 1000.0}));
  CHECK(big->values[0] == doctest::Approx(0.5));

  std::vector<bool> none = {false, false};
  CHECK_THROWS_AS(softmax(tensor1d({1.0, 2.0}), &none), DegenerateInputError);
  std::vector<bool> short_mask = {true};
  CHECK_THROWS_AS(softmax(tensor1d({1.0, 2.0}), &short_mask), ShapeError);
}

TEST_CASE("softmax_rows applies one key mask to every row") {
  auto a = tensor({2, 3}, {1, 1, 1, 0, 1, 2});
  std::vector<bool> keys = {true, true, false};
  auto y = softmax_rows(a, &keys);
  CHECK(y->at(0, 2) == 0.0);
  CHECK(y->at(1, 2) == 0.0);
  CHECK(y->at(0, 0) == doctest::Approx(0.5));
  CHECK(y->at(1, 0) + y->at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("mask_rows zeroes dead rows and their gradients") {
  auto a = param({3, 2}, "a");
  a->values = {1, 2, 3, 4, 5, 6};
  std::vector<bool> keep = {true, false, true};
  Tape tape;
  auto y = mask_rows(a, keep);
  CHECK(y->at(1, 0) == 0.0);
  CHECK(y->at(2, 1) == 6.0);
  tape.backward(sum(y));
  CHECK(a->grad_at(0, 0) == 1.0);
  CHECK(a->grad_at(1, 0) == 0.0);
  CHECK(a->grad_at(1, 1) == 0.0);
  CHECK(a->grad_at(2, 1) == 1.0);
}

TEST_CASE("concat joins along either axis") {
  auto a = tensor({1, 2}, {1, 2});
  auto b = tensor({2, 2}, {3, 4, 5, 6});
  auto v = concat({a, b}, 0);
  CHECK(v->rows() == 3);
  CHECK(v->at(2, 1) == 6.0);

  auto c = tensor({2, 1}, {7, 8});
  auto h = concat({b, c}, 1);
  CHECK(h->cols() == 3);
  CHECK(h->at(0, 2) == 7.0);
  CHECK(h->at(1, 2) == 8.0);

  auto x = concat({tensor1d({1, 2}), tensor1d({3})}, 0);
  CHECK(x->rank() == 1);
  CHECK(x->values == std::vector<double>{1, 2, 3});

  CHECK_THROWS_AS(concat({}, 0), ShapeError);
  CHECK_THROWS_AS(concat({a, b}, 2), ShapeError);
  CHECK_THROWS_AS(concat({a, tensor({2, 3}, {1, 2, 3, 4, 5, 6})}, 0), ShapeError);
}

TEST_CASE("stack_rows and row are inverses") {
  auto m = stack_rows({tensor1d({1, 2}), tensor1d({3, 4}), tensor1d({5, 6})});
  CHECK(m->rows() == 3);
  CHECK(m->at(2, 0) == 5.0);
  auto r = row(m, 1);
  CHECK(r->values == std::vector<double>{3, 4});
  CHECK_THROWS_AS(row(m, 3), ShapeError);
  CHECK_THROWS_AS(stack_rows({tensor1d({1}), tensor1d({1, 2})}), ShapeError);
}

TEST_CASE("weighted_sum combines rows by weight") {
  auto h = tensor({2, 3}, {1, 2, 3, 10, 20, 30});
  auto w = tensor1d({0.5, 0.1});
  auto y = weighted_sum(h, w);
  CHECK(y->values[0] == doctest::Approx(1.5));
  CHECK(y->values[2] == doctest::Approx(4.5));
  CHECK_THROWS_AS(weighted_sum(h, tensor1d({1, 2, 3})), ShapeError);
}

TEST_CASE("embedding_lookup gathers rows and scatters gradients") {
  auto table = param({4, 2}, "table");
  table->values = {0, 0, 1, 2, 3, 4, 5, 6};
  Tape tape;
  auto e = embedding_lookup(table, {2, 1, 2});
  CHECK(e->rows() == 3);
  CHECK(e->at(0, 1) == 4.0);
  CHECK(e->at(1, 0) == 1.0);
  tape.backward(sum(e));
  CHECK(table->grad_at(2, 0) == 2.0);  // looked up twice
  CHECK(table->grad_at(1, 1) == 1.0);
  CHECK(table->grad_at(0, 0) == 0.0);
  CHECK(table->grad_at(3, 0) == 0.0);

  CHECK_THROWS_AS(embedding_lookup(table, {4}), std::out_of_range);
  CHECK_THROWS_AS(embedding_lookup(table, {-1}), std::out_of_range);
}

TEST_CASE("dot, sum, and logsumexp reduce correctly") {
  CHECK(dot(tensor1d({1, 2, 3}), tensor1d({4, 5, 6}))->item() == 32.0);
  CHECK(sum(tensor({2, 2}, {1, 2, 3, 4}))->item() == 10.0);

  auto l = logsumexp(tensor1d({0.0, 0.0}));
  CHECK(l->item() == doctest::Approx(std::log(2.0)));
  auto big = logsumexp(tensor1d({1000.0, 1000.0}));
  CHECK(big->item() == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK_THROWS_AS(dot(tensor1d({1}), tensor1d({1, 2})), ShapeError);
}

TEST_CASE("gradients of every op match finite differences") {
  Rng rng(20240811);

  SUBCASE("matmul lhs and rhs") {
    auto a = random_input({3, 4}, rng);
    auto b = random_input({4, 2}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(matmul(t, b)); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(matmul(a, t)); }, b, kStep) < kGradTol);
  }

  SUBCASE("matvec") {
    auto w = random_input({3, 4}, rng);
    auto x = random_input({4}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(matvec(t, x)); }, w, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(matvec(w, t)); }, x, kStep) < kGradTol);
  }

  SUBCASE("transpose") {
    auto a = random_input({2, 3}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return dot(row(transpose(t), 1), tensor1d({1, 2})); },
                     a, kStep) < kGradTol);
  }

  SUBCASE("arithmetic") {
    auto a = random_input({5}, rng);
    auto b = random_input({5}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(add(t, b)); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(sub(b, t)); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(mul(t, b)); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(mul(t, t)); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(scale(t, -1.7)); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(one_minus(t)); }, a, kStep) < kGradTol);
  }

  SUBCASE("add_rowwise bias") {
    auto m = random_input({3, 4}, rng);
    auto b = random_input({4}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(add_rowwise(t, b)); }, m, kStep) <
          kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(add_rowwise(m, t)); }, b, kStep) <
          kGradTol);
  }

  SUBCASE("nonlinearities") {
    auto x = random_input({6}, rng, -2.0, 2.0);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(sigmoid(t)); }, x, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(tanh(t)); }, x, kStep) < kGradTol);
  }

  SUBCASE("softmax with and without mask") {
    auto x = random_input({5}, rng);
    auto probe = tensor1d({0.3, -0.7, 1.1, 0.2, -0.4});
    CHECK(grad_check([&](const TensorPtr& t) { return dot(softmax(t), probe); }, x, kStep) <
          kGradTol);
    std::vector<bool> mask = {true, false, true, true, false};
    CHECK(grad_check([&](const TensorPtr& t) { return dot(softmax(t, &mask), probe); }, x, kStep) <
          kGradTol);
  }

  SUBCASE("softmax_rows") {
    auto a = random_input({3, 4}, rng);
    auto probe = tensor({3, 4}, {1, -1, 2, 0.5, 0, 1, -2, 1, 3, 0.1, 0.2, 0.3});
    std::vector<bool> keys = {true, true, false, true};
    CHECK(grad_check([&](const TensorPtr& t) { return sum(mul(softmax_rows(t, &keys), probe)); },
                     a, kStep) < kGradTol);
  }

  SUBCASE("structural ops") {
    auto a = random_input({2, 3}, rng);
    auto b = random_input({1, 3}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(concat({t, b}, 0)); }, a, kStep) <
          kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(concat({a, t}, 0)); }, b, kStep) <
          kGradTol);
    auto c = random_input({2, 2}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(concat({a, t}, 1)); }, c, kStep) <
          kGradTol);
    auto v = random_input({4}, rng);
    CHECK(grad_check(
              [&](const TensorPtr& t) { return sum(stack_rows({t, tensor1d({1, 2, 3, 4})})); }, v,
              kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(row(t, 1)); }, a, kStep) < kGradTol);
    std::vector<bool> keep = {true, false};
    CHECK(grad_check([&](const TensorPtr& t) { return sum(mask_rows(t, keep)); }, a, kStep) <
          kGradTol);
  }

  SUBCASE("weighted_sum both arguments") {
    auto h = random_input({3, 4}, rng);
    auto w = random_input({3}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(weighted_sum(t, w)); }, h, kStep) <
          kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(weighted_sum(h, t)); }, w, kStep) <
          kGradTol);
  }

  SUBCASE("embedding_lookup table gradient") {
    auto table = random_input({5, 3}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(embedding_lookup(t, {0, 3, 3})); },
                     table, kStep) < kGradTol);
  }

  SUBCASE("reductions") {
    auto a = random_input({4}, rng);
    auto b = random_input({4}, rng);
    CHECK(grad_check([&](const TensorPtr& t) { return dot(t, b); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return dot(t, t); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return sum(t); }, a, kStep) < kGradTol);
    CHECK(grad_check([&](const TensorPtr& t) { return logsumexp(t); }, a, kStep) < kGradTol);
  }

  SUBCASE("a composite expression") {
    auto x = random_input({4}, rng);
    auto w = random_input({4, 4}, rng);
    auto f = [&](const TensorPtr& t) {
      auto hidden = tanh(matvec(w, t));
      auto gate = sigmoid(matvec(w, hidden));
      return logsumexp(mul(gate, hidden));
    };
    CHECK(grad_check(f, x, kStep) < kGradTol);
  }
}

TEST_CASE("grad_check rejects a non-positive step") {
  auto x = tensor1d({1.0, 2.0});
  x->set_requires_grad(true);
  CHECK_THROWS_AS(grad_check([&](const TensorPtr& t) { return sum(t); }, x, 0.0),
                  std::invalid_argument);
}
