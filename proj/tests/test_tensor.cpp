#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "testutil.hpp"
#include "wsnn/tensor.hpp"

using wsnn::Tensor;
using namespace testutil;

namespace {

// ---------------------------------------------------------------------------
// oracles (independent reference implementations the library must match)
// ---------------------------------------------------------------------------

// Naive triple loop with 64-bit accumulation.
template <typename T>
Tensor<double> matmul_oracle(const Tensor<T>& a, const Tensor<T>& b) {
  const size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<double> c({M, N});
  for (size_t i = 0; i < M; ++i) {
    for (size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < K; ++k) acc += double(a(i, k)) * double(b(k, j));
      c(i, j) = acc;
    }
  }
  return c;
}

// Direct sliding-window cross-correlation of one [CxHxW] image with
// [KxCxkhxkw] filters, 64-bit accumulation, zero padding.
Tensor<double> conv_oracle(const Tensor<float>& x, const Tensor<float>& w,
                           size_t stride, size_t pad) {
  const size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const size_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const size_t out_h = (H + 2 * pad - kh) / stride + 1;
  const size_t out_w = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> out({K, out_h, out_w});
  for (size_t k = 0; k < K; ++k) {
    for (size_t oy = 0; oy < out_h; ++oy) {
      for (size_t ox = 0; ox < out_w; ++ox) {
        double acc = 0.0;
        for (size_t c = 0; c < C; ++c) {
          for (size_t fy = 0; fy < kh; ++fy) {
            for (size_t fx = 0; fx < kw; ++fx) {
              const long long iy = (long long)(oy * stride + fy) - (long long)pad;
              const long long ix = (long long)(ox * stride + fx) - (long long)pad;
              if (iy < 0 || iy >= (long long)H || ix < 0 || ix >= (long long)W) {
                continue;  // zero padding
              }
              acc += double(x(c, size_t(iy), size_t(ix))) *
                     double(w(k, c, fy, fx));
            }
          }
        }
        out(k, oy, ox) = acc;
      }
    }
  }
  return out;
}

// Linear scan returning the maximum and the flat index of its first
// occurrence.
template <typename T>
std::pair<T, int64_t> scan_max(const T* x, size_t n) {
  T best = x[0];
  int64_t at = 0;
  for (size_t i = 1; i < n; ++i) {
    if (x[i] > best) {
      best = x[i];
      at = int64_t(i);
    }
  }
  return {best, at};
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TEST_CASE("matmul identity passes the operand through") {
  auto eye = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  auto y = wsnn::matmul(eye, m);
  CHECK(bit_equal(y, m));
}

TEST_CASE("matmul contracts a row with a column") {
  auto row = Tensor<float>::from({1, 2}, {1, 2});
  auto col = Tensor<float>::from({2, 1}, {3, 4});
  auto y = wsnn::matmul(row, col);
  REQUIRE(y.shape() == std::vector<size_t>{1, 1});
  CHECK(y(0, 0) == 11.0f);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  // Positive operands keep every dot product away from cancellation, so the
  // strict relative tolerance is meaningful.
  wsnn::Rng rng(11);
  Tensor<float> a({5, 7}), b({7, 3});
  fill_uniform(a, rng, 0.2, 1.0);
  fill_uniform(b, rng, 0.2, 1.0);
  auto got = wsnn::matmul(a, b);
  auto want = matmul_oracle(a, b);
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(double(got(i)) - want(i)) / std::abs(want(i)) <= 1e-6);
  }
}

TEST_CASE("matmul agrees with the oracle across 100 random seeds") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    wsnn::Rng rng(seed);
    const size_t M = 1 + rng.uniform_int(6);
    const size_t K = 1 + rng.uniform_int(8);
    const size_t N = 1 + rng.uniform_int(6);
    Tensor<float> a({M, K}), b({K, N});
    // Positive operands first: no cancellation, the strict bound applies.
    fill_uniform(a, rng, 0.1, 1.0);
    fill_uniform(b, rng, 0.1, 1.0);
    auto got = wsnn::matmul(a, b);
    auto want = matmul_oracle(a, b);
    double worst = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
      worst = std::max(worst,
                       std::abs(double(got(i)) - want(i)) / std::abs(want(i)));
    }
    CHECK(worst <= 1e-6);

    // Mixed-sign operands exercise cancellation; there the bound is relative
    // with an absolute floor (a tiny dot product has no stable relative
    // error).
    fill_normal(a, rng);
    fill_normal(b, rng);
    auto got2 = wsnn::matmul(a, b);
    auto want2 = matmul_oracle(a, b);
    double worst2 = 0.0;
    for (size_t i = 0; i < got2.size(); ++i) {
      worst2 = std::max(worst2, rel_err(double(got2(i)), want2(i)));
    }
    CHECK(worst2 <= 1e-5);
  }
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
  Tensor<float> a({2, 3}), b({2, 3});
  CHECK_THROWS_AS(wsnn::matmul(a, b), wsnn::ShapeError);
  try {
    wsnn::matmul(a, b);
  } catch (const wsnn::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("checked ops refuse to return non-finite values") {
  auto a = Tensor<float>::from({1, 2}, {std::numeric_limits<float>::max(), 1});
  auto b = Tensor<float>::from({1, 2}, {std::numeric_limits<float>::max(), 1});
  CHECK_THROWS_AS(wsnn::mul(a, b), wsnn::NumericError);  // overflows to inf

  auto nan = Tensor<float>::from({2}, {0.0f, NAN});
  auto ones = Tensor<float>::full({2}, 1.0f);
  CHECK_THROWS_AS(wsnn::add(nan, ones), wsnn::NumericError);
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

TEST_CASE("im2col with a kernel covering the whole input yields one column") {
  auto x = Tensor<float>::from({1, 2, 2}, {1, 2, 3, 4});
  auto col = wsnn::im2col(x, 2, 2, 1, 1, 0, 0);
  REQUIRE(col.shape() == std::vector<size_t>{4, 1});
  for (size_t i = 0; i < 4; ++i) CHECK(col(i, 0) == x(i));
}

TEST_CASE("im2col fills the padding region with zeros") {
  // 3x3 of ones, k=3, p=1: the corner output position overlaps five padded
  // cells, so its column holds exactly four ones.
  auto x = Tensor<float>::full({1, 3, 3}, 1.0f);
  auto col = wsnn::im2col(x, 3, 3, 1, 1, 1, 1);
  REQUIRE(col.shape() == std::vector<size_t>{9, 9});
  double corner_sum = 0.0;
  for (size_t r = 0; r < 9; ++r) corner_sum += col(r, 0);
  CHECK(corner_sum == 4.0);
  // Rows of the corner column that fall outside the image are exactly zero.
  CHECK(col(0, 0) == 0.0f);  // tap (-1,-1)
  CHECK(col(1, 0) == 0.0f);  // tap (-1, 0)
  CHECK(col(3, 0) == 0.0f);  // tap ( 0,-1)
}

TEST_CASE("im2col + matmul convolution matches the sliding-window oracle "
          "across a geometry grid") {
  wsnn::Rng rng(23);
  Tensor<float> x({3, 5, 5});
  fill_normal(x, rng);
  size_t tested = 0;
  for (size_t k = 1; k <= 3; ++k) {
    for (size_t s = 1; s <= 2; ++s) {
      for (size_t p = 0; p <= 1; ++p) {
        if (p >= k) continue;  // padding beyond the kernel is unused here
        if ((5 + 2 * p - k) % s != 0) continue;  // non-integral output
        Tensor<float> w({2, 3, k, k});
        fill_normal(w, rng);
        auto col = wsnn::im2col(x, k, k, s, s, p, p);
        auto wmat = Tensor<float>(w).reshaped({2, 3 * k * k});
        auto got = wsnn::matmul(wmat, col);
        auto want = conv_oracle(x, w, s, p);
        for (size_t i = 0; i < got.size(); ++i) {
          CHECK(rel_err(double(got(i)), want(i)) <= 1e-5);
        }
        ++tested;
      }
    }
  }
  CHECK(tested >= 6);  // the grid must not silently skip everything
}

TEST_CASE("im2col rejects non-integral output geometry") {
  Tensor<float> x({1, 5, 5});
  CHECK_THROWS_AS(wsnn::im2col(x, 2, 2, 2, 2, 0, 0), wsnn::ShapeError);
}

TEST_CASE("col2im is the adjoint of im2col") {
  // <im2col(x), c> == <x, col2im(c)> for any x and c is exactly the adjoint
  // property the conv backward pass relies on.
  wsnn::Rng rng(31);
  Tensor<double> x({2, 6, 5});
  fill_normal(x, rng);
  auto col = wsnn::im2col(x, 3, 2, 1, 1, 1, 0);
  Tensor<double> c(col.shape());
  fill_normal(c, rng);
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < col.size(); ++i) lhs += col(i) * c(i);
  auto back = wsnn::col2im(c, 2, 6, 5, 3, 2, 1, 1, 1, 0);
  for (size_t i = 0; i < x.size(); ++i) rhs += x(i) * back(i);
  CHECK(rel_err(lhs, rhs) <= 1e-12);
}

// ---------------------------------------------------------------------------
// reduce_max_with_index
// ---------------------------------------------------------------------------

TEST_CASE("reduce_max returns the maximum and its flat index") {
  auto x = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  auto r = wsnn::reduce_max_with_index(x, {0, 1});
  REQUIRE(r.values.rank() == 0);
  CHECK(r.values(0) == 4.0f);
  CHECK(r.indices(0) == 3);
}

TEST_CASE("reduce_max ties break to the first occurrence") {
  auto x = Tensor<float>::from({1, 2}, {5, 5});
  auto r = wsnn::reduce_max_with_index(x, {0, 1});
  CHECK(r.values(0) == 5.0f);
  CHECK(r.indices(0) == 0);
}

TEST_CASE("reduce_max matches a linear scan on random data") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    wsnn::Rng rng(seed + 500);
    Tensor<float> x({4, 6});
    fill_normal(x, rng);

    auto all = wsnn::reduce_max_with_index(x, {0, 1});
    auto [want, at] = scan_max(x.data(), x.size());
    CHECK(all.values(0) == want);
    CHECK(all.indices(0) == at);

    // Per-row reduction: each block is one row, indices are flat within it.
    auto rows = wsnn::reduce_max_with_index(x, {1});
    REQUIRE(rows.values.shape() == std::vector<size_t>{4});
    for (size_t i = 0; i < 4; ++i) {
      auto [rmax, rat] = scan_max(x.data() + i * 6, 6);
      CHECK(rows.values(i) == rmax);
      CHECK(rows.indices(i) == rat);
      // The argmax always points at an element equal to the returned max.
      CHECK(x(i, size_t(rows.indices(i))) == rows.values(i));
    }
  }
}

TEST_CASE("reduce_max rejects empty and duplicate axis lists") {
  Tensor<float> x({2, 2});
  CHECK_THROWS_AS(wsnn::reduce_max_with_index(x, {}), wsnn::ShapeError);
  CHECK_THROWS_AS(wsnn::reduce_max_with_index(x, {1, 1}), wsnn::ShapeError);
  CHECK_THROWS_AS(wsnn::reduce_max_with_index(x, {2}), wsnn::ShapeError);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

TEST_CASE("elementwise identities hold") {
  wsnn::Rng rng(7);
  Tensor<float> x({3, 4});
  fill_normal(x, rng);

  CHECK(bit_equal(wsnn::add(x, 0.0f), x));
  CHECK(bit_equal(wsnn::mul(x, 1.0f), x));

  Tensor<float> y({3, 4});
  fill_normal(y, rng);
  auto round_trip = wsnn::add(wsnn::sub(x, y), y);
  CHECK(max_abs_diff(round_trip, x) <= 1e-6);

  auto prod = wsnn::mul(x, y);
  for (size_t i = 0; i < x.size(); ++i) CHECK(prod(i) == x(i) * y(i));
}

TEST_CASE("elementwise ops reject shape mismatches") {
  Tensor<float> a({2, 2}), b({4});
  CHECK_THROWS_AS(wsnn::add(a, b), wsnn::ShapeError);
  CHECK_THROWS_AS(wsnn::sub(a, b), wsnn::ShapeError);
  CHECK_THROWS_AS(wsnn::mul(a, b), wsnn::ShapeError);
}

// ---------------------------------------------------------------------------
// tensor basics
// ---------------------------------------------------------------------------

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(t.dim(3), wsnn::ShapeError);

  Tensor<float> scalar;  // rank 0 holds exactly one element
  CHECK(scalar.rank() == 0);
  CHECK(scalar.size() == 1);

  CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1, 2, 3}), wsnn::ShapeError);
  CHECK_THROWS_AS(t.reshaped({5, 5}), wsnn::ShapeError);
  auto r = t.reshaped({4, 6});
  CHECK(r.shape() == std::vector<size_t>{4, 6});
  CHECK(r.size() == 24);
}
