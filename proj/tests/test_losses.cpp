#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "testutil.hpp"
#include "wsnn/losses.hpp"
#include "wsnn/nn/layers.hpp"

using namespace wsnn;
using namespace wsnn::losses;
using namespace testutil;

namespace {

// ---------------------------------------------------------------------------
// oracles (64-bit, direct formulas)
// ---------------------------------------------------------------------------

double mse_oracle(const Tensor<double>& x, const Tensor<double>& y) {
  const size_t B = x.dim(0), n = x.dim(1);
  double total = 0.0;
  for (size_t b = 0; b < B; ++b) {
    double ex = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = x(b, i) - y(b, i);
      ex += d * d;
    }
    total += ex / double(n);
  }
  return total / double(B);
}

double ce_oracle(const Tensor<double>& x, const Tensor<int64_t>& y) {
  const size_t B = x.dim(0), C = x.dim(1);
  double total = 0.0;
  for (size_t b = 0; b < B; ++b) {
    double mx = x(b, 0);
    for (size_t c = 0; c < C; ++c) mx = std::max(mx, x(b, c));
    double denom = 0.0;
    for (size_t c = 0; c < C; ++c) denom += std::exp(x(b, c) - mx);
    total -= x(b, size_t(y(b))) - mx - std::log(denom);
  }
  return total / double(B);
}

// Overflow-safe softplus: log(1+e^v) = max(v,0) + log1p(e^-|v|).
double softplus(double v) {
  return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

double ml_oracle(const Tensor<double>& x, const Tensor<double>& y) {
  const size_t B = x.dim(0), C = x.dim(1);
  double total = 0.0;
  for (size_t b = 0; b < B; ++b) {
    for (size_t c = 0; c < C; ++c) {
      total += y(b, c) * softplus(-x(b, c)) +
               (1.0 - y(b, c)) * softplus(x(b, c));
    }
  }
  return total / double(B);
}

// Central-difference check of a loss gradient in the predictions. Returns
// the worst relative error; the floor keeps near-zero gradient pairs from
// blowing up the ratio.
template <typename Fn>
double fd_gradient_error(Fn loss, Tensor<double> x, const Tensor<double>& grad,
                         double h = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = loss(x);
    x(i) = keep - h;
    const double dn = loss(x);
    x(i) = keep;
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, rel_err(fd, grad(i), 1e-3));
  }
  return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// mse
// ---------------------------------------------------------------------------

TEST_CASE("mse is zero exactly when predictions equal targets") {
  Rng rng(1);
  Tensor<double> x({3, 4});
  fill_normal(x, rng);
  auto out = mse(x, x);
  CHECK(out.value == 0.0);
  for (size_t i = 0; i < out.grad.size(); ++i) CHECK(out.grad(i) == 0.0);

  Tensor<double> y(x);
  y(1, 2) += 0.5;
  CHECK(mse(x, y).value > 0.0);
}

TEST_CASE("mse of a unit miss on both classes is one") {
  auto x = Tensor<float>::from({1, 2}, {1.0f, 0.0f});
  auto y = Tensor<float>::from({1, 2}, {0.0f, 1.0f});
  CHECK(mse(x, y).value == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("mse matches the 64-bit oracle") {
  Rng rng(2);
  Tensor<double> x({4, 7}), y({4, 7});
  fill_normal(x, rng);
  fill_normal(y, rng);
  auto out = mse(x, y);
  CHECK(rel_err(double(out.value), mse_oracle(x, y), 1e-6) <= 1e-10);
}

TEST_CASE("mse gradient matches finite differences") {
  Rng rng(3);
  Tensor<double> x({3, 5}), y({3, 5});
  fill_normal(x, rng);
  fill_normal(y, rng);
  auto out = mse(x, y);
  auto fn = [&](const Tensor<double>& p) { return double(mse(p, y).value); };
  CHECK(fd_gradient_error(fn, x, out.grad) < 1e-4);
}

TEST_CASE("mse rejects mismatched shapes") {
  Tensor<float> x({2, 3}), y({2, 4});
  CHECK_THROWS_AS(mse(x, y), ShapeError);
}

// ---------------------------------------------------------------------------
// cross entropy
// ---------------------------------------------------------------------------

TEST_CASE("cross entropy of uniform scores is log of the class count") {
  auto x = Tensor<double>::zeros({1, 2});
  auto y = Tensor<int64_t>::from({1}, {0});
  CHECK(cross_entropy(x, y).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy vanishes under a wide correct margin") {
  auto x = Tensor<double>::from({1, 2}, {100.0, 0.0});
  auto y = Tensor<int64_t>::from({1}, {0});
  CHECK(cross_entropy(x, y).value < 1e-6);
}

TEST_CASE("cross entropy matches the 64-bit oracle") {
  Rng rng(4);
  Tensor<double> x({5, 9});
  fill_normal(x, rng, 0.0, 3.0);
  Tensor<int64_t> y({5});
  for (size_t b = 0; b < 5; ++b) y(b) = int64_t(rng.uniform_int(9));
  auto out = cross_entropy(x, y);
  CHECK(rel_err(double(out.value), ce_oracle(x, y), 1e-6) <= 1e-12);
}

TEST_CASE("cross entropy is shift invariant") {
  Rng rng(5);
  Tensor<double> x({3, 6});
  fill_normal(x, rng, 0.0, 4.0);
  Tensor<int64_t> y({3});
  for (size_t b = 0; b < 3; ++b) y(b) = int64_t(rng.uniform_int(6));
  const double base = cross_entropy(x, y).value;
  const double shifted = cross_entropy(wsnn::add(x, 123.0), y).value;
  CHECK(rel_err(base, shifted, 1e-6) <= 1e-12);
}

TEST_CASE("cross entropy absorbs a prior log-softmax") {
  // log softmax is idempotent, so pre-normalized scores give the same loss.
  Rng rng(6);
  Tensor<double> x({4, 8});
  fill_normal(x, rng, 0.0, 2.0);
  Tensor<int64_t> y({4});
  for (size_t b = 0; b < 4; ++b) y(b) = int64_t(rng.uniform_int(8));
  nn::LogSoftmax<double> ls;
  const double raw = cross_entropy(x, y).value;
  const double normed = cross_entropy(ls.forward(x), y).value;
  CHECK(rel_err(raw, normed, 1e-6) <= 1e-10);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  Rng rng(7);
  Tensor<double> x({3, 5});
  fill_normal(x, rng);
  Tensor<int64_t> y({3});
  for (size_t b = 0; b < 3; ++b) y(b) = int64_t(rng.uniform_int(5));
  auto out = cross_entropy(x, y);
  auto fn = [&](const Tensor<double>& p) {
    return double(cross_entropy(p, y).value);
  };
  CHECK(fd_gradient_error(fn, x, out.grad) < 1e-4);
}

TEST_CASE("cross entropy gradient rows sum to zero") {
  // grad = (softmax - onehot)/B; both terms sum to 1 per row.
  Rng rng(8);
  Tensor<double> x({4, 6});
  fill_normal(x, rng);
  Tensor<int64_t> y({4});
  for (size_t b = 0; b < 4; ++b) y(b) = int64_t(rng.uniform_int(6));
  auto out = cross_entropy(x, y);
  for (size_t b = 0; b < 4; ++b) {
    double sum = 0.0;
    for (size_t c = 0; c < 6; ++c) sum += out.grad(b, c);
    CHECK(std::abs(sum) <= 1e-12);
  }
}

TEST_CASE("cross entropy rejects bad labels") {
  Tensor<float> x({2, 3});
  auto high = Tensor<int64_t>::from({2}, {0, 3});
  CHECK_THROWS_AS(cross_entropy(x, high), wsnn::Error);
  auto negative = Tensor<int64_t>::from({2}, {-1, 0});
  CHECK_THROWS_AS(cross_entropy(x, negative), wsnn::Error);
  auto short_labels = Tensor<int64_t>::from({1}, {0});
  CHECK_THROWS_AS(cross_entropy(x, short_labels), ShapeError);
}

// ---------------------------------------------------------------------------
// multilabel entropy
// ---------------------------------------------------------------------------

TEST_CASE("multilabel entropy of zero scores is C log 2") {
  // At x=0 every class contributes softplus(0)=log 2 whatever its target.
  auto x = Tensor<double>::zeros({1, 5});
  auto y = Tensor<double>::from({1, 5}, {1, 0, 1, 0, 0});
  CHECK(multilabel_entropy(x, y).value ==
        doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("multilabel entropy vanishes for confident correct scores") {
  auto x = Tensor<double>::from({1, 2}, {100.0, -100.0});
  auto y = Tensor<double>::from({1, 2}, {1.0, 0.0});
  CHECK(multilabel_entropy(x, y).value < 1e-6);
}

TEST_CASE("multilabel entropy stays finite at extreme logits") {
  auto x = Tensor<float>::from({1, 2}, {10000.0f, -10000.0f});
  auto y = Tensor<float>::from({1, 2}, {0.0f, 1.0f});
  auto out = multilabel_entropy(x, y);
  CHECK(std::isfinite(out.value));
  CHECK(out.value > 1000.0f);  // two fully-wrong hinges of ~10^4 each
}

TEST_CASE("multilabel entropy matches the 64-bit softplus oracle") {
  Rng rng(9);
  Tensor<double> x({4, 10});
  fill_normal(x, rng, 0.0, 3.0);
  Tensor<double> y({4, 10});
  for (size_t i = 0; i < y.size(); ++i) y(i) = rng.bernoulli(0.3) ? 1.0 : 0.0;
  auto out = multilabel_entropy(x, y);
  CHECK(rel_err(double(out.value), ml_oracle(x, y), 1e-6) <= 1e-10);
}

TEST_CASE("multilabel entropy gradient matches finite differences") {
  Rng rng(10);
  Tensor<double> x({3, 6});
  fill_normal(x, rng);
  Tensor<double> y({3, 6});
  for (size_t i = 0; i < y.size(); ++i) y(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  auto out = multilabel_entropy(x, y);
  auto fn = [&](const Tensor<double>& p) {
    return double(multilabel_entropy(p, y).value);
  };
  CHECK(fd_gradient_error(fn, x, out.grad) < 1e-4);
}

TEST_CASE("multilabel entropy rejects non-binary targets") {
  Tensor<float> x({1, 3});
  auto y = Tensor<float>::from({1, 3}, {1.0f, 0.5f, 0.0f});
  CHECK_THROWS_AS(multilabel_entropy(x, y), wsnn::Error);
  Tensor<float> wrong({1, 4});
  CHECK_THROWS_AS(multilabel_entropy(x, wrong), ShapeError);
}

// ---------------------------------------------------------------------------
// shared invariants
// ---------------------------------------------------------------------------

TEST_CASE("all losses are non-negative on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> x({3, 4}), t({3, 4});
    fill_normal(x, rng, 0.0, 2.0);
    fill_normal(t, rng, 0.0, 2.0);
    CHECK(mse(x, t).value >= 0.0);

    Tensor<int64_t> y({3});
    for (size_t b = 0; b < 3; ++b) y(b) = int64_t(rng.uniform_int(4));
    CHECK(cross_entropy(x, y).value >= 0.0);

    Tensor<double> bin({3, 4});
    for (size_t i = 0; i < bin.size(); ++i) {
      bin(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    CHECK(multilabel_entropy(x, bin).value >= 0.0);
  }
}
