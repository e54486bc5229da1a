#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <vector>

#include "testutil.hpp"
#include "wsnn/nn/gradcheck.hpp"
#include "wsnn/stn.hpp"

using namespace wsnn;
using namespace wsnn::stn;
using namespace testutil;

namespace {

constexpr double kPi = 3.14159265358979323846;

// 64-bit per-point oracle for one grid coordinate.
void grid_point_oracle(const Tensor<double>& A, size_t b, size_t y, size_t x,
                       size_t out_h, size_t out_w, double* xs, double* ys) {
  const double yt =
      out_h == 1 ? 0.0 : -1.0 + 2.0 * double(y) / double(out_h - 1);
  const double xt =
      out_w == 1 ? 0.0 : -1.0 + 2.0 * double(x) / double(out_w - 1);
  *xs = A(b, 0, 0) * xt + A(b, 0, 1) * yt + A(b, 0, 2);
  *ys = A(b, 1, 0) * xt + A(b, 1, 1) * yt + A(b, 1, 2);
}

// Identity grid for a given output size (align-corners normalized coords).
template <typename T>
Tensor<T> identity_grid(size_t B, size_t h, size_t w) {
  auto A = Tensor<T>({B, 2, 3});
  for (size_t b = 0; b < B; ++b) {
    A(b, 0, 0) = T(1);
    A(b, 1, 1) = T(1);
  }
  return affine_grid(A, h, w);
}

// A grid whose source pixel coordinates sit at fraction f inside cell
// (cx, cy), safely away from the kinks of the bilinear kernel at integer
// coordinates.
Tensor<double> jittered_grid(size_t B, size_t out_h, size_t out_w, size_t H,
                             size_t W, Rng& rng) {
  Tensor<double> grid({B, out_h, out_w, 2});
  for (size_t b = 0; b < B; ++b) {
    for (size_t y = 0; y < out_h; ++y) {
      for (size_t x = 0; x < out_w; ++x) {
        const double px =
            double(rng.uniform_int(W - 1)) + rng.uniform(0.2, 0.8);
        const double py =
            double(rng.uniform_int(H - 1)) + rng.uniform(0.2, 0.8);
        grid(b, y, x, 0) = 2.0 * px / double(W - 1) - 1.0;
        grid(b, y, x, 1) = 2.0 * py / double(H - 1) - 1.0;
      }
    }
  }
  return grid;
}

// Flatten + single linear: the smallest localizer shape the transformer
// accepts.
template <typename T>
std::unique_ptr<nn::Sequential<T>> toy_localizer(size_t in_pixels,
                                                 size_t n_params) {
  auto loc = std::make_unique<nn::Sequential<T>>();
  loc->add(std::make_unique<nn::Flatten<T>>(), "flatten");
  loc->add(std::make_unique<nn::Linear<T>>(in_pixels, n_params), "fc");
  return loc;
}

}  // namespace

// ---------------------------------------------------------------------------
// parameter expansion
// ---------------------------------------------------------------------------

TEST_CASE("mode parsing and parameter counts") {
  CHECK(parse_mode("2p") == Mode::p2);
  CHECK(parse_mode("3p") == Mode::p3);
  CHECK(parse_mode("4p") == Mode::p4);
  CHECK(parse_mode("6p") == Mode::p6);
  CHECK(mode_params(Mode::p2) == 2);
  CHECK(mode_params(Mode::p3) == 3);
  CHECK(mode_params(Mode::p4) == 4);
  CHECK(mode_params(Mode::p6) == 6);
  for (Mode m : {Mode::p2, Mode::p3, Mode::p4, Mode::p6}) {
    CHECK(parse_mode(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_mode("5p"), ConfigError);
  CHECK_THROWS_AS(parse_mode(""), ConfigError);
}

TEST_CASE("three-parameter identity expands to the identity matrix") {
  auto raw = Tensor<float>::from({1, 3}, {1.0f, 0.0f, 0.0f});
  auto A = expand_params(raw, Mode::p3);
  auto want = Tensor<float>::from({1, 2, 3}, {1, 0, 0, 0, 1, 0});
  CHECK(bit_equal(A, want));
}

TEST_CASE("two-parameter mode bakes in the fixed scale") {
  auto raw = Tensor<float>::from({1, 2}, {0.25f, -0.5f});
  auto A = expand_params(raw, Mode::p2, 0.32f);
  auto want =
      Tensor<float>::from({1, 2, 3}, {0.32f, 0, 0.25f, 0, 0.32f, -0.5f});
  CHECK(bit_equal(A, want));
}

TEST_CASE("four-parameter mode rotates") {
  auto raw = Tensor<double>::from({1, 4}, {1.0, kPi / 2.0, 0.0, 0.0});
  auto A = expand_params(raw, Mode::p4);
  auto want = Tensor<double>::from({1, 2, 3}, {0, -1, 0, 1, 0, 0});
  CHECK(max_abs_diff(A, want) <= 1e-6);
}

TEST_CASE("six-parameter mode is a plain reshape") {
  auto raw = Tensor<float>::from({2, 6},
                                 {1, 2, 3, 4, 5, 6, -1, -2, -3, -4, -5, -6});
  auto A = expand_params(raw, Mode::p6);
  REQUIRE(A.shape() == std::vector<size_t>{2, 2, 3});
  for (size_t i = 0; i < 12; ++i) CHECK(A(i) == raw(i));
}

TEST_CASE("zero rotation collapses four parameters onto three") {
  auto raw3 = Tensor<float>::from({1, 3}, {0.7f, 0.2f, -0.3f});
  auto raw4 = Tensor<float>::from({1, 4}, {0.7f, 0.0f, 0.2f, -0.3f});
  CHECK(bit_equal(expand_params(raw3, Mode::p3),
                  expand_params(raw4, Mode::p4)));
}

TEST_CASE("each mode embeds into the next richer one") {
  const float fs = 0.32f, tx = 0.15f, ty = -0.4f;
  auto A2 =
      expand_params(Tensor<float>::from({1, 2}, {tx, ty}), Mode::p2, fs);
  auto A3 =
      expand_params(Tensor<float>::from({1, 3}, {fs, tx, ty}), Mode::p3);
  auto A4 = expand_params(Tensor<float>::from({1, 4}, {fs, 0.0f, tx, ty}),
                          Mode::p4);
  auto A6 = expand_params(
      Tensor<float>::from({1, 6}, {fs, 0, tx, 0, fs, ty}), Mode::p6);
  CHECK(max_abs_diff(A2, A3) <= 1e-6);
  CHECK(max_abs_diff(A3, A4) <= 1e-6);
  CHECK(max_abs_diff(A4, A6) <= 1e-6);
}

TEST_CASE("identity parameters expand to the identity transform") {
  auto want = Tensor<float>::from({1, 2, 3}, {1, 0, 0, 0, 1, 0});
  for (Mode m : {Mode::p3, Mode::p4, Mode::p6}) {
    auto raw = identity_params<float>(m);
    CHECK(bit_equal(expand_params(raw, m), want));
  }
  // p2 has no scale parameter; its identity is whatever scale the caller
  // fixed.
  auto raw2 = identity_params<float>(Mode::p2);
  CHECK(bit_equal(expand_params(raw2, Mode::p2, 1.0f), want));
}

TEST_CASE("expansion rejects a raw width that does not match the mode") {
  Tensor<float> raw({1, 3});
  CHECK_THROWS_AS(expand_params(raw, Mode::p2), ShapeError);
  CHECK_THROWS_AS(expand_params(raw, Mode::p6), ShapeError);
  Tensor<float> flat({3});
  CHECK_THROWS_AS(expand_params(flat, Mode::p3), ShapeError);
}

TEST_CASE("expansion backward matches finite differences in every mode") {
  Rng rng(1);
  for (Mode m : {Mode::p2, Mode::p3, Mode::p4, Mode::p6}) {
    Tensor<double> raw({2, mode_params(m)});
    fill_normal(raw, rng, 0.0, 0.5);
    Tensor<double> R({2, 2, 3});  // random projection of the matrix
    fill_normal(R, rng);
    auto dr = expand_params_backward(raw, m, R);
    const double h = 1e-6;
    for (size_t i = 0; i < raw.size(); ++i) {
      Tensor<double> up(raw), dn(raw);
      up(i) += h;
      dn(i) -= h;
      auto Au = expand_params(up, m, 0.32), Ad = expand_params(dn, m, 0.32);
      double fd = 0.0;
      for (size_t j = 0; j < Au.size(); ++j) {
        fd += (Au(j) - Ad(j)) * R(j);
      }
      fd /= 2.0 * h;
      CHECK(rel_err(fd, dr(i), 1e-3) <= 1e-6);
    }
  }
}

// ---------------------------------------------------------------------------
// grid generation
// ---------------------------------------------------------------------------

TEST_CASE("the identity grid spans the corner-aligned unit square") {
  auto grid = identity_grid<float>(1, 3, 3);
  const float expect[3] = {-1.0f, 0.0f, 1.0f};
  for (size_t y = 0; y < 3; ++y) {
    for (size_t x = 0; x < 3; ++x) {
      CHECK(grid(0, y, x, 0) == expect[x]);
      CHECK(grid(0, y, x, 1) == expect[y]);
    }
  }
}

TEST_CASE("a translation column shifts every source coordinate") {
  auto A = Tensor<float>::from({1, 2, 3}, {1, 0, 0.5f, 0, 1, 0});
  auto base = identity_grid<float>(1, 4, 5);
  auto grid = affine_grid(A, 4, 5);
  for (size_t y = 0; y < 4; ++y) {
    for (size_t x = 0; x < 5; ++x) {
      CHECK(grid(0, y, x, 0) ==
            doctest::Approx(base(0, y, x, 0) + 0.5f).epsilon(1e-6));
      CHECK(grid(0, y, x, 1) == base(0, y, x, 1));
    }
  }
}

TEST_CASE("affine grids match the 64-bit per-point oracle") {
  Rng rng(2);
  Tensor<double> A({3, 2, 3});
  fill_normal(A, rng, 0.0, 0.7);
  auto grid = affine_grid(A, 5, 7);
  for (size_t b = 0; b < 3; ++b) {
    for (size_t y = 0; y < 5; ++y) {
      for (size_t x = 0; x < 7; ++x) {
        double xs, ys;
        grid_point_oracle(A, b, y, x, 5, 7, &xs, &ys);
        CHECK(rel_err(grid(b, y, x, 0), xs, 1e-3) <= 1e-12);
        CHECK(rel_err(grid(b, y, x, 1), ys, 1e-3) <= 1e-12);
      }
    }
  }
}

TEST_CASE("a single-cell grid reads the translation directly") {
  auto A = Tensor<float>::from({1, 2, 3}, {2, 3, 0.25f, 4, 5, -0.75f});
  auto grid = affine_grid(A, 1, 1);
  CHECK(grid(0, 0, 0, 0) == 0.25f);  // the size-1 axes contribute coord 0
  CHECK(grid(0, 0, 0, 1) == -0.75f);
}

TEST_CASE("grid generation rejects malformed matrices and empty sizes") {
  Tensor<float> bad({1, 3, 2});
  CHECK_THROWS_AS(affine_grid(bad, 4, 4), ShapeError);
  Tensor<float> A({1, 2, 3});
  CHECK_THROWS_AS(affine_grid(A, 0, 4), ShapeError);
  CHECK_THROWS_AS(affine_grid(A, 4, 0), ShapeError);
}

TEST_CASE("grid backward accumulates the affine normal equations") {
  Rng rng(3);
  Tensor<double> A({2, 2, 3});
  fill_normal(A, rng);
  Tensor<double> R({2, 4, 6, 2});
  fill_normal(R, rng);
  auto dA = affine_grid_backward(R);
  const double h = 1e-6;
  for (size_t i = 0; i < A.size(); ++i) {
    Tensor<double> up(A), dn(A);
    up(i) += h;
    dn(i) -= h;
    auto gu = affine_grid(up, 4, 6), gd = affine_grid(dn, 4, 6);
    double fd = 0.0;
    for (size_t j = 0; j < gu.size(); ++j) fd += (gu(j) - gd(j)) * R(j);
    fd /= 2.0 * h;
    CHECK(rel_err(fd, dA(i), 1e-3) <= 1e-6);
  }
}

// ---------------------------------------------------------------------------
// bilinear sampling
// ---------------------------------------------------------------------------

TEST_CASE("identity sampling reproduces the image bit for bit") {
  // Sides with (n-1) a power of two give dyadic normalized coordinates, so
  // every source pixel coordinate round-trips exactly.
  Rng rng(4);
  for (size_t side : {size_t(5), size_t(17)}) {
    Tensor<float> x({2, 3, side, side});
    fill_normal(x, rng);
    auto out = bilinear_sample(x, identity_grid<float>(2, side, side));
    CHECK(bit_equal(out, x));
  }
}

TEST_CASE("a midpoint sample averages its two taps exactly") {
  auto x = Tensor<float>::from({1, 1, 1, 2}, {2.0f, 4.0f});
  Tensor<float> grid({1, 1, 1, 2});
  grid(0, 0, 0, 0) = 0.0f;  // halfway between the two pixels
  grid(0, 0, 0, 1) = 0.0f;
  auto y = bilinear_sample(x, grid);
  CHECK(y(0, 0, 0, 0) == 3.0f);
}

TEST_CASE("coordinates beyond the image fade to black") {
  auto x = Tensor<float>::full({1, 1, 4, 4}, 7.0f);
  Tensor<float> grid({1, 1, 2, 2});
  grid(0, 0, 0, 0) = -5.0f;  // far left
  grid(0, 0, 0, 1) = 0.0f;
  grid(0, 0, 1, 0) = 0.0f;  // dead centre
  grid(0, 0, 1, 1) = 0.0f;
  auto y = bilinear_sample(x, grid);
  CHECK(y(0, 0, 0, 0) == 0.0f);
  CHECK(y(0, 0, 0, 1) == 7.0f);
}

TEST_CASE("bilinear gradients match finite differences off the lattice") {
  Rng rng(5);
  Tensor<double> x({1, 2, 5, 6});
  fill_normal(x, rng);
  auto grid = jittered_grid(1, 3, 3, 5, 6, rng);
  Tensor<double> R({1, 2, 3, 3});
  fill_normal(R, rng);

  auto grads = bilinear_sample_backward(x, grid, R);
  auto probe = [&](const Tensor<double>& in, const Tensor<double>& g) {
    auto out = bilinear_sample(in, g);
    double L = 0.0;
    for (size_t i = 0; i < out.size(); ++i) L += out(i) * R(i);
    return L;
  };

  const double h = 1e-6;
  for (size_t i = 0; i < x.size(); ++i) {
    Tensor<double> up(x), dn(x);
    up(i) += h;
    dn(i) -= h;
    const double fd = (probe(up, grid) - probe(dn, grid)) / (2.0 * h);
    CHECK(rel_err(fd, grads.dinput(i), 1e-3) <= 1e-3);
  }
  for (size_t i = 0; i < grid.size(); ++i) {
    Tensor<double> up(grid), dn(grid);
    up(i) += h;
    dn(i) -= h;
    const double fd = (probe(x, up) - probe(x, dn)) / (2.0 * h);
    CHECK(rel_err(fd, grads.dgrid(i), 1e-3) <= 1e-3);
  }
}

TEST_CASE("sampling rejects mismatched shapes") {
  Tensor<float> x({1, 1, 4, 4});
  Tensor<float> grid({2, 3, 3, 2});  // wrong batch
  CHECK_THROWS_AS(bilinear_sample(x, grid), ShapeError);
  Tensor<float> badlast({1, 3, 3, 3});
  CHECK_THROWS_AS(bilinear_sample(x, badlast), ShapeError);
}

// ---------------------------------------------------------------------------
// downsampling
// ---------------------------------------------------------------------------

TEST_CASE("downsampling to the same size is the identity") {
  Rng rng(6);
  Tensor<float> x({1, 2, 9, 9});
  fill_normal(x, rng);
  CHECK(bit_equal(stn::downsample(x, 9, 9), x));
}

TEST_CASE("downsampling preserves constant images") {
  auto x = Tensor<double>::full({1, 1, 100, 100}, 0.375);
  auto y = stn::downsample(x, 32, 32);
  REQUIRE(y.shape() == std::vector<size_t>{1, 1, 32, 32});
  for (size_t i = 0; i < y.size(); ++i) {
    CHECK(std::abs(y(i) - 0.375) <= 1e-12);
  }
}

TEST_CASE("downsampling a linear ramp stays linear") {
  // Bilinear interpolation reproduces affine images exactly: output pixel j
  // reads value px = j*(W_in-1)/(W_out-1).
  Tensor<double> x({1, 1, 10, 100});
  for (size_t y = 0; y < 10; ++y) {
    for (size_t j = 0; j < 100; ++j) x(0, 0, y, j) = double(j);
  }
  auto out = stn::downsample(x, 10, 32);
  for (size_t y = 0; y < 10; ++y) {
    for (size_t j = 0; j < 32; ++j) {
      const double want = double(j) * 99.0 / 31.0;
      CHECK(rel_err(out(0, 0, y, j), want, 1e-3) <= 1e-12);
    }
  }
}

TEST_CASE("downsample backward matches finite differences") {
  Rng rng(7);
  Tensor<double> x({1, 2, 5, 5});
  fill_normal(x, rng);
  Tensor<double> R({1, 2, 3, 3});
  fill_normal(R, rng);
  auto dx = downsample_backward(x, 3, 3, R);
  const double h = 1e-6;
  for (size_t i = 0; i < x.size(); ++i) {
    Tensor<double> up(x), dn(x);
    up(i) += h;
    dn(i) -= h;
    auto yu = stn::downsample(up, 3, 3), yd = stn::downsample(dn, 3, 3);
    double fd = 0.0;
    for (size_t j = 0; j < yu.size(); ++j) fd += (yu(j) - yd(j)) * R(j);
    fd /= 2.0 * h;
    CHECK(rel_err(fd, dx(i), 1e-3) <= 1e-6);
  }
}

// ---------------------------------------------------------------------------
// the full transformer module
// ---------------------------------------------------------------------------

TEST_CASE("a frozen identity localizer passes the input through") {
  auto loc = toy_localizer<float>(17 * 17, 3);
  // Zero weights + identity bias: the regressed transform is exactly the
  // identity whatever the input.
  auto& fc = static_cast<nn::Linear<float>&>(loc->layer(1));
  fc.weight().zero();
  fc.bias() = identity_params<float>(Mode::p3);
  SpatialTransformer<float> st(std::move(loc), Mode::p3, 17, 17);

  Rng rng(8);
  Tensor<float> x({2, 1, 17, 17});
  fill_normal(x, rng);
  CHECK(bit_equal(st.forward(x), x));
}

TEST_CASE("init points the transformer at the identity transform") {
  // After init_params the raw output is the identity parameters, so the
  // module reduces to a bilinear resize of the input.
  auto loc = toy_localizer<float>(9 * 9, 3);
  SpatialTransformer<float> st(std::move(loc), Mode::p3, 8, 8, 9, 9);
  Rng rng(9);
  st.init_params(nn::InitScheme::fan_in_sqrt, rng);

  Tensor<float> x({2, 1, 33, 33});
  fill_normal(x, rng);
  auto got = st.forward(x);
  auto want = stn::downsample(x, 8, 8);
  CHECK(max_abs_diff(got, want) <= 1e-7);
}

TEST_CASE("the transformer is the composition of its published pieces") {
  Rng rng(10);
  auto loc = toy_localizer<float>(7 * 7, 2);
  loc->init_params(nn::InitScheme::fan_in_sqrt, rng);
  auto loc_copy = std::make_unique<nn::Sequential<float>>();
  loc_copy->add(loc->layer(0).clone(), "flatten");
  loc_copy->add(loc->layer(1).clone(), "fc");

  const float fs = 0.32f;
  SpatialTransformer<float> st(std::move(loc), Mode::p2, 6, 6, 0, 0, fs);
  Tensor<float> x({2, 1, 7, 7});
  fill_normal(x, rng);

  auto raw = loc_copy->forward(x);
  auto manual =
      bilinear_sample(x, affine_grid(expand_params(raw, Mode::p2, fs), 6, 6));
  auto got = st.forward(x);
  CHECK(bit_equal(got, manual));
  // Repeated forwards are pure.
  CHECK(bit_equal(st.forward(x), got));
}

TEST_CASE("transformer gradients match finite differences") {
  Rng rng(14);
  auto loc = toy_localizer<double>(9 * 9, 3);
  SpatialTransformer<double> st(std::move(loc), Mode::p3, 5, 5);
  st.init_params(nn::InitScheme::fan_in_sqrt, rng);
  // Nudge the localizer off the exact identity so source coordinates land
  // at generic (kink-free) positions.
  for (auto& p : st.params()) {
    for (size_t i = 0; i < p.value->size(); ++i) {
      (*p.value)(i) += rng.normal(0.0, 0.05);
    }
  }
  Tensor<double> x({1, 1, 9, 9});
  fill_normal(x, rng);
  CHECK(nn::gradient_check(st, x) < 1e-3);
}

TEST_CASE("the transformer exposes localizer parameters for training") {
  auto loc = toy_localizer<float>(4 * 4, 3);
  SpatialTransformer<float> st(std::move(loc), Mode::p3, 4, 4);
  auto params = st.params();
  REQUIRE(params.size() == 2);  // fc weight + bias
  const size_t total = params[0].value->size() + params[1].value->size();
  CHECK(total == 16 * 3 + 3);
}
