#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nmt/ops.hpp"
#include "nmt/tensor.hpp"

using namespace nmt;

// ===== construction and accessors =====

TEST_CASE("zeros allocates the right count of zero values") {
  Tensor t = Tensor::zeros({3, 4});
  CHECK(t.numel() == 12);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 4);
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t.at(i) == 0.0);
}

TEST_CASE("full fills every entry") {
  Tensor t = Tensor::full({2, 2}, -1.5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.at(i) == -1.5);
}

TEST_CASE("from checks the value count against the shape") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  Tensor t = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.at(1, 0) == 3.0);
}

TEST_CASE("rank-1 tensors behave as a single row") {
  Tensor t = Tensor::from({3}, {1.0, 2.0, 3.0});
  CHECK(t.rows() == 1);
  CHECK(t.cols() == 3);
  CHECK(t.at(0, 2) == 3.0);
}

TEST_CASE("scalar() rejects non-scalars") {
  CHECK(Tensor::from({1}, {7.0}).scalar() == 7.0);
  CHECK_THROWS_AS(Tensor::zeros({2}).scalar(), DimensionError);
}

TEST_CASE("all_finite flags NaN and infinity") {
  Tensor t = Tensor::from({2}, {1.0, 2.0});
  CHECK(t.all_finite());
  t.at(1) = std::nan("");
  CHECK_FALSE(t.all_finite());
  t.at(1) = INFINITY;
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("copies share buffers; deep_copy detaches") {
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  Tensor b = a;
  b.at(0) = 9.0;
  CHECK(a.at(0) == 9.0);

  Tensor c = a.deep_copy();
  c.at(0) = 5.0;
  CHECK(a.at(0) == 9.0);
  CHECK(c.data != a.data);
}

TEST_CASE("make_trainable allocates a zero grad shared by handle copies") {
  Tensor a = Tensor::zeros({2, 2});
  Tensor b = a;  // handle copy taken before make_trainable
  a.make_trainable();
  CHECK(a.requires_grad);
  CHECK(a.grad);
  // The copy shares the data buffer, so composing a graph through either
  // handle must reach the same storage.
  CHECK(b.data == a.data);
  (*a.grad)[0] = 3.0;
  a.zero_grad();
  CHECK((*a.grad)[0] == 0.0);
}

// ===== reverse-mode accumulation =====

TEST_CASE("backward requires a scalar that carries gradient state") {
  Tensor v = Tensor::zeros({2});
  v.make_trainable();
  CHECK_THROWS_AS(backward(v), DimensionError);
  Tensor plain = Tensor::zeros({1});
  CHECK_THROWS_AS(backward(plain), StateError);
}

TEST_CASE("diamond graph accumulates both paths") {
  // y = (x + x) summed to a scalar via scale and add; dy/dx = 2 per entry.
  Tensor x = Tensor::from({1}, {3.0});
  x.make_trainable();
  Tensor y = add(x, x);
  backward(y);
  CHECK((*x.grad)[0] == doctest::Approx(2.0));
}

TEST_CASE("two backward calls accumulate into the same grads") {
  Tensor x = Tensor::from({1}, {2.0});
  x.make_trainable();
  backward(scale(x, 3.0));
  backward(scale(x, 4.0));
  CHECK((*x.grad)[0] == doctest::Approx(7.0));
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Tensor x = Tensor::from({1}, {2.0});
  x.make_trainable();
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Tensor y = scale(x, 3.0);
    CHECK_FALSE(y.requires_grad);
    CHECK(!y.node);
  }
  CHECK(grad_enabled());
}

TEST_CASE("a deep chain backpropagates without recursion limits") {
  Tensor x = Tensor::from({1}, {1.0});
  x.make_trainable();
  Tensor y = x;
  for (int i = 0; i < 2000; ++i) y = scale(y, 1.0);
  backward(y);
  CHECK((*x.grad)[0] == doctest::Approx(1.0));
}

// ===== seeded randomness =====

TEST_CASE("identical seeds give identical streams") {
  RandomSource a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform(0.0, 1.0) == b.uniform(0.0, 1.0));
  RandomSource c(43);
  bool any_diff = false;
  RandomSource a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= (a2.uniform(0.0, 1.0) != c.uniform(0.0, 1.0));
  CHECK(any_diff);
}

TEST_CASE("uniform_int stays in range and rejects n == 0") {
  RandomSource r(7);
  for (int i = 0; i < 200; ++i) CHECK(r.uniform_int(5) < 5);
  CHECK_THROWS_AS(r.uniform_int(0), ConfigError);
}

TEST_CASE("bernoulli validates its probability") {
  RandomSource r(7);
  CHECK_THROWS_AS(r.bernoulli(-0.1), ConfigError);
  CHECK_THROWS_AS(r.bernoulli(1.1), ConfigError);
  int hits = 0;
  for (int i = 0; i < 1000; ++i) hits += r.bernoulli(0.5) ? 1 : 0;
  CHECK(hits > 400);
  CHECK(hits < 600);
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> v = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> w = v;
  RandomSource a(9), b(9);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}
