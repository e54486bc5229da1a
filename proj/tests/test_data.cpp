#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "wsnn/data/dataset.hpp"
#include "wsnn/stn.hpp"

using namespace wsnn;
using namespace wsnn::data;
using namespace testutil;

namespace {

std::string mnist_dir() {
  const char* env = std::getenv("WSNN_MNIST_DIR");
  return env ? env : "/root/data/mnist";
}

LabeledDataset load_train() {
  const std::string d = mnist_dir();
  return load_mnist_idx(d + "/train-images-idx3-ubyte",
                        d + "/train-labels-idx1-ubyte");
}

// --- synthetic IDX files -----------------------------------------------

void put_be32(std::ofstream& f, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::string temp_path(const std::string& name) {
  return std::string("wsnn_test_") + name;
}

std::string write_idx_images(const std::string& name, uint32_t magic,
                             uint32_t n, uint32_t h, uint32_t w,
                             const std::vector<unsigned char>& pixels) {
  const std::string path = temp_path(name);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  put_be32(f, magic);
  put_be32(f, n);
  put_be32(f, h);
  put_be32(f, w);
  f.write(reinterpret_cast<const char*>(pixels.data()),
          std::streamsize(pixels.size()));
  return path;
}

std::string write_idx_labels(const std::string& name, uint32_t magic,
                             uint32_t n,
                             const std::vector<unsigned char>& labels) {
  const std::string path = temp_path(name);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  put_be32(f, magic);
  put_be32(f, n);
  f.write(reinterpret_cast<const char*>(labels.data()),
          std::streamsize(labels.size()));
  return path;
}

// Three 2x2 images with bytes 0/128/255 and labels 0,1,2.
struct TinyIdx {
  std::string images, labels;
};

TinyIdx write_tiny_valid() {
  TinyIdx t;
  t.images = write_idx_images(
      "ok-images", 0x803, 3, 2, 2,
      {0, 128, 255, 64, 10, 20, 30, 40, 200, 201, 202, 203});
  t.labels = write_idx_labels("ok-labels", 0x801, 3, {0, 1, 2});
  return t;
}

// Small synthetic digit set (values in [0,1], side x side) for placement
// tests that should not depend on the real files.
LabeledDataset synthetic_digits(size_t n, size_t side, uint64_t seed) {
  LabeledDataset ds;
  ds.images = Tensor<float>({n, 1, side, side});
  ds.labels = Tensor<int64_t>({n});
  Rng rng(seed);
  for (size_t i = 0; i < n; ++i) {
    for (size_t p = 0; p < side * side; ++p) {
      ds.images(i * side * side + p) = float(rng.uniform(0.0, 1.0));
    }
    ds.labels(i) = int64_t(i % 10);
  }
  return ds;
}

double pixel_sum(const Tensor<float>& images, size_t item, size_t hw) {
  double s = 0.0;
  for (size_t p = 0; p < hw; ++p) s += images(item * hw + p);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// idx loading
// ---------------------------------------------------------------------------

TEST_CASE("the real digit sets load with their documented shapes") {
  auto train = load_train();
  CHECK(train.size() == 60000);
  CHECK(train.images.shape() == std::vector<size_t>{60000, 1, 28, 28});
  CHECK(train.labels.dim(0) == 60000);
  CHECK(train.offsets.empty());

  const std::string d = mnist_dir();
  auto test = load_mnist_idx(d + "/t10k-images-idx3-ubyte",
                             d + "/t10k-labels-idx1-ubyte");
  CHECK(test.size() == 10000);
  CHECK(test.height() == 28);
  CHECK(test.width() == 28);

  // Pixels are bytes over 255, so the global max is exactly 1.
  float mx = 0.0f, mn = 1.0f;
  for (size_t i = 0; i < train.images.size(); ++i) {
    mx = std::max(mx, train.images(i));
    mn = std::min(mn, train.images(i));
  }
  CHECK(mx == 1.0f);
  CHECK(mn == 0.0f);
  for (size_t i = 0; i < train.size(); ++i) {
    CHECK(train.labels(i) >= 0);
    CHECK(train.labels(i) <= 9);
  }
}

TEST_CASE("idx bytes scale by 1/255 and labels ride along") {
  auto t = write_tiny_valid();
  auto ds = load_mnist_idx(t.images, t.labels);
  REQUIRE(ds.size() == 3);
  CHECK(ds.images(0) == 0.0f);
  CHECK(ds.images(1) == 128.0f / 255.0f);
  CHECK(ds.images(2) == 1.0f);
  CHECK(ds.labels(0) == 0);
  CHECK(ds.labels(1) == 1);
  CHECK(ds.labels(2) == 2);
  std::remove(t.images.c_str());
  std::remove(t.labels.c_str());
}

TEST_CASE("idx loading rejects wrong magic numbers") {
  auto imgs = write_idx_images("badmagic-images", 0x804, 1, 2, 2,
                               {1, 2, 3, 4});
  auto lbls = write_idx_labels("badmagic-labels", 0x801, 1, {0});
  CHECK_THROWS_AS(load_mnist_idx(imgs, lbls), IdxBadMagicError);

  auto imgs2 = write_idx_images("okmagic-images", 0x803, 1, 2, 2,
                                {1, 2, 3, 4});
  auto lbls2 = write_idx_labels("badmagic2-labels", 0x17, 1, {0});
  CHECK_THROWS_AS(load_mnist_idx(imgs2, lbls2), IdxBadMagicError);
  for (auto& p : {imgs, lbls, imgs2, lbls2}) std::remove(p.c_str());
}

TEST_CASE("idx loading rejects truncated files") {
  // Pixel payload ends inside the second image.
  auto imgs = write_idx_images("trunc-images", 0x803, 2, 2, 2,
                               {1, 2, 3, 4, 5});
  auto lbls = write_idx_labels("trunc-labels", 0x801, 2, {0, 1});
  CHECK_THROWS_AS(load_mnist_idx(imgs, lbls), IdxTruncatedError);

  // Header cut short.
  const std::string stub = temp_path("stub-images");
  {
    std::ofstream f(stub, std::ios::binary | std::ios::trunc);
    put_be32(f, 0x803);
  }
  CHECK_THROWS_AS(load_mnist_idx(stub, lbls), IdxTruncatedError);
  for (auto& p : {imgs, lbls, stub}) std::remove(p.c_str());
}

TEST_CASE("idx loading rejects diverging image and label counts") {
  auto imgs = write_idx_images("count-images", 0x803, 2, 2, 2,
                               {1, 2, 3, 4, 5, 6, 7, 8});
  auto lbls = write_idx_labels("count-labels", 0x801, 3, {0, 1, 2});
  CHECK_THROWS_AS(load_mnist_idx(imgs, lbls), IdxCountMismatchError);
  for (auto& p : {imgs, lbls}) std::remove(p.c_str());
}

TEST_CASE("idx loading rejects labels outside the digit range") {
  auto imgs = write_idx_images("range-images", 0x803, 1, 2, 2, {1, 2, 3, 4});
  auto lbls = write_idx_labels("range-labels", 0x801, 1, {10});
  CHECK_THROWS_AS(load_mnist_idx(imgs, lbls), IoError);
  for (auto& p : {imgs, lbls}) std::remove(p.c_str());
}

TEST_CASE("idx loading reports missing files") {
  CHECK_THROWS_AS(load_mnist_idx("definitely-absent", "also-absent"), IoError);
}

// ---------------------------------------------------------------------------
// padding and translation
// ---------------------------------------------------------------------------

TEST_CASE("padding centers the image in a black border") {
  auto base = synthetic_digits(2, 2, 1);
  auto padded = pad_images(base, 6, 6);
  REQUIRE(padded.images.shape() == std::vector<size_t>{2, 1, 6, 6});
  CHECK(bit_equal(padded.labels, base.labels));
  for (size_t i = 0; i < 2; ++i) {
    // centre block survives untouched
    for (size_t y = 0; y < 2; ++y) {
      for (size_t x = 0; x < 2; ++x) {
        CHECK(padded.images(i, 0, 2 + y, 2 + x) == base.images(i, 0, y, x));
      }
    }
    CHECK(pixel_sum(padded.images, i, 36) ==
          doctest::Approx(pixel_sum(base.images, i, 4)).epsilon(1e-12));
    // the border is black
    for (size_t x = 0; x < 6; ++x) {
      CHECK(padded.images(i, 0, 0, x) == 0.0f);
      CHECK(padded.images(i, 0, 5, x) == 0.0f);
      CHECK(padded.images(i, 0, x, 0) == 0.0f);
      CHECK(padded.images(i, 0, x, 5) == 0.0f);
    }
  }
  CHECK_THROWS_AS(pad_images(base, 1, 6), ConfigError);
}

TEST_CASE("a digit-box canvas leaves no room to translate") {
  auto base = synthetic_digits(5, 28, 2);
  auto ds = make_translated_mnist(base, 32, 7);
  REQUIRE(ds.offsets.size() == 5);
  for (const auto& o : ds.offsets) {
    CHECK(o.dx == 0);
    CHECK(o.dy == 0);
  }
  auto padded = pad_images(base, 32, 32);
  CHECK(bit_equal(ds.images, padded.images));
  CHECK(bit_equal(ds.labels, base.labels));
}

TEST_CASE("translation offsets cover the full legal range") {
  auto base = subset(load_train(), 2000);
  auto ds = make_translated_mnist(base, 100, 11);
  REQUIRE(ds.offsets.size() == 2000);
  int64_t min_dx = 1000, max_dx = -1, min_dy = 1000, max_dy = -1;
  for (const auto& o : ds.offsets) {
    min_dx = std::min(min_dx, o.dx);
    max_dx = std::max(max_dx, o.dx);
    min_dy = std::min(min_dy, o.dy);
    max_dy = std::max(max_dy, o.dy);
  }
  // Uniform over [0, 68]; 2000 draws hit both endpoints of each axis with
  // overwhelming probability.
  CHECK(min_dx == 0);
  CHECK(max_dx == 68);
  CHECK(min_dy == 0);
  CHECK(max_dy == 68);
}

TEST_CASE("translation moves mass without creating or destroying it") {
  auto base = synthetic_digits(20, 28, 3);
  auto ds = make_translated_mnist(base, 64, 13);
  for (size_t i = 0; i < 20; ++i) {
    // Zeros interleave but never alter the running sum, so the totals agree
    // exactly, not just approximately.
    CHECK(pixel_sum(ds.images, i, 64 * 64) ==
          pixel_sum(base.images, i, 28 * 28));
  }
}

TEST_CASE("the stored offset recovers the padded digit") {
  auto base = synthetic_digits(10, 28, 4);
  auto ds = make_translated_mnist(base, 64, 17);
  auto padded = pad_images(base, 32, 32);
  for (size_t i = 0; i < 10; ++i) {
    const auto& o = ds.offsets[i];
    for (size_t y = 0; y < 32; ++y) {
      for (size_t x = 0; x < 32; ++x) {
        CHECK(ds.images(i, 0, size_t(o.dy) + y, size_t(o.dx) + x) ==
              padded.images(i, 0, y, x));
      }
    }
    // everything outside the box is black
    double outside = 0.0;
    for (size_t y = 0; y < 64; ++y) {
      for (size_t x = 0; x < 64; ++x) {
        const bool in_box = y >= size_t(o.dy) && y < size_t(o.dy) + 32 &&
                            x >= size_t(o.dx) && x < size_t(o.dx) + 32;
        if (!in_box) outside += ds.images(i, 0, y, x);
      }
    }
    CHECK(outside == 0.0);
  }
}

TEST_CASE("translation is deterministic per seed") {
  auto base = synthetic_digits(8, 28, 5);
  auto a = make_translated_mnist(base, 48, 21);
  auto b = make_translated_mnist(base, 48, 21);
  auto c = make_translated_mnist(base, 48, 22);
  CHECK(bit_equal(a.images, b.images));
  CHECK(bit_equal(a.labels, b.labels));
  for (size_t i = 0; i < 8; ++i) {
    CHECK(a.offsets[i].dx == b.offsets[i].dx);
    CHECK(a.offsets[i].dy == b.offsets[i].dy);
  }
  CHECK(!bit_equal(a.images, c.images));
}

TEST_CASE("per-item rendering reproduces the materialized set") {
  auto base = synthetic_digits(30, 28, 6);
  const uint64_t seed = 33;
  auto ds = make_translated_mnist(base, 64, seed);
  Rng root(seed);
  std::vector<float> plane(64 * 64);
  for (size_t i = 0; i < 30; ++i) {
    LabeledDataset::Placement placement;
    render_translated_item(base, i, 64, root.derive(i), false, plane.data(),
                           placement);
    CHECK(placement.dx == ds.offsets[i].dx);
    CHECK(placement.dy == ds.offsets[i].dy);
    bool same = true;
    for (size_t p = 0; p < plane.size(); ++p) {
      same = same && plane[p] == ds.images(i * 64 * 64 + p);
    }
    CHECK(same);
  }
}

TEST_CASE("clutter scatters distractor crops outside the digit box") {
  auto base = subset(load_train(), 50);
  auto ds = make_translated_mnist(base, 100, 19, true);
  size_t items_with_outside_ink = 0;
  for (size_t i = 0; i < 50; ++i) {
    const auto& o = ds.offsets[i];
    double outside = 0.0;
    float mx = 0.0f, mn = 1.0f;
    for (size_t y = 0; y < 100; ++y) {
      for (size_t x = 0; x < 100; ++x) {
        const float v = ds.images(i, 0, y, x);
        mx = std::max(mx, v);
        mn = std::min(mn, v);
        const bool in_box = y >= size_t(o.dy) && y < size_t(o.dy) + 32 &&
                            x >= size_t(o.dx) && x < size_t(o.dx) + 32;
        if (!in_box) outside += v;
      }
    }
    CHECK(mn >= 0.0f);
    CHECK(mx <= 1.0f);
    if (outside > 0.0) ++items_with_outside_ink;
  }
  CHECK(items_with_outside_ink > 25);  // most canvases carry clutter
}

TEST_CASE("translation rejects a canvas smaller than the digit box") {
  auto base = synthetic_digits(2, 28, 7);
  CHECK_THROWS_AS(make_translated_mnist(base, 31, 1), ConfigError);
}

// ---------------------------------------------------------------------------
// resizing
// ---------------------------------------------------------------------------

TEST_CASE("dataset resizing delegates to the attention sampler") {
  Rng rng(8);
  Tensor<float> x({2, 1, 100, 100});
  fill_normal(x, rng);
  CHECK(bit_equal(data::downsample(x, 32, 32), stn::downsample(x, 32, 32)));
  Tensor<float> small({1, 1, 9, 9});
  fill_normal(small, rng);
  CHECK(bit_equal(data::downsample(small, 9, 9), small));
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

TEST_CASE("whitening statistics match the direct formulas") {
  auto imgs = Tensor<float>::from({1, 1, 2, 2}, {0.0f, 0.5f, 1.0f, 0.5f});
  auto stats = compute_stats(imgs);
  CHECK(stats.mean == doctest::Approx(0.5f).epsilon(1e-6));
  CHECK(stats.std == doctest::Approx(std::sqrt(0.125)).epsilon(1e-6));
}

TEST_CASE("normalization standardizes and round-trips") {
  Rng rng(9);
  Tensor<float> imgs({50, 1, 8, 8});
  fill_uniform(imgs, rng, 0.0, 1.0);
  Tensor<float> original(imgs);

  auto stats = compute_stats(imgs);
  normalize(imgs, stats);
  double mean = 0.0, var = 0.0;
  for (size_t i = 0; i < imgs.size(); ++i) mean += imgs(i);
  mean /= double(imgs.size());
  for (size_t i = 0; i < imgs.size(); ++i) {
    var += (imgs(i) - mean) * (imgs(i) - mean);
  }
  var /= double(imgs.size());
  CHECK(std::abs(mean) <= 1e-4);
  CHECK(std::abs(var - 1.0) <= 1e-3);

  denormalize(imgs, stats);
  CHECK(max_abs_diff(imgs, original) <= 1e-6);
}

TEST_CASE("whitening rejects degenerate inputs") {
  Tensor<float> empty({0, 1, 2, 2});
  CHECK_THROWS_AS(compute_stats(empty), wsnn::Error);
  auto constant = Tensor<float>::full({4, 1, 2, 2}, 0.25f);
  CHECK_THROWS_AS(compute_stats(constant), wsnn::Error);
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

TEST_CASE("augmentation policies parse from their text forms") {
  CHECK(parse_augment("none").kind == AugmentPolicy::Kind::none);
  CHECK(parse_augment("").kind == AugmentPolicy::Kind::none);

  auto shift = parse_augment("shift(3)");
  CHECK(shift.kind == AugmentPolicy::Kind::shift);
  CHECK(shift.max_px == 3);

  auto flip = parse_augment("hflip(0.25)");
  CHECK(flip.kind == AugmentPolicy::Kind::hflip);
  CHECK(flip.flip_p == doctest::Approx(0.25).epsilon(1e-12));

  auto crop = parse_augment("crop_rescale(0.7,1.0,32)");
  CHECK(crop.kind == AugmentPolicy::Kind::crop_rescale);
  CHECK(crop.lo == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(crop.hi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(crop.out == 32);

  CHECK_THROWS_AS(parse_augment("zoom(2)"), ConfigError);
  CHECK_THROWS_AS(parse_augment("shift(-1)"), ConfigError);
  CHECK_THROWS_AS(parse_augment("hflip(1.5)"), ConfigError);
  CHECK_THROWS_AS(parse_augment("crop_rescale(1.2,0.8,32)"), ConfigError);
  CHECK_THROWS_AS(parse_augment("crop_rescale(0.5,1.0,0)"), ConfigError);
}

TEST_CASE("the none policy and zero-radius shifts are identities") {
  Rng rng(10);
  Tensor<float> batch({3, 1, 5, 5});
  fill_uniform(batch, rng, 0.0, 1.0);
  Rng r1(1);
  CHECK(bit_equal(augment(batch, parse_augment("none"), r1), batch));
  Rng r2(1);
  CHECK(bit_equal(augment(batch, parse_augment("shift(0)"), r2), batch));
}

TEST_CASE("a certain horizontal flip mirrors every row") {
  Rng rng(11);
  Tensor<float> batch({2, 1, 4, 6});
  fill_uniform(batch, rng, 0.0, 1.0);
  Rng r1(2);
  auto flipped = augment(batch, parse_augment("hflip(1.0)"), r1);
  for (size_t b = 0; b < 2; ++b) {
    for (size_t y = 0; y < 4; ++y) {
      for (size_t x = 0; x < 6; ++x) {
        CHECK(flipped(b, 0, y, x) == batch(b, 0, y, 5 - x));
      }
    }
  }
  // flipping twice restores the batch
  Rng r2(3);
  auto twice = augment(flipped, parse_augment("hflip(1.0)"), r2);
  CHECK(bit_equal(twice, batch));
}

TEST_CASE("shifts move a lone pixel within the advertised radius") {
  Tensor<float> batch = Tensor<float>::zeros({16, 1, 9, 9});
  for (size_t b = 0; b < 16; ++b) batch(b, 0, 4, 4) = 1.0f;
  Rng rng(12);
  auto out = augment(batch, parse_augment("shift(2)"), rng);
  bool saw_movement = false;
  for (size_t b = 0; b < 16; ++b) {
    size_t found = 0, fy = 0, fx = 0;
    for (size_t y = 0; y < 9; ++y) {
      for (size_t x = 0; x < 9; ++x) {
        if (out(b, 0, y, x) != 0.0f) {
          ++found;
          fy = y;
          fx = x;
        }
      }
    }
    REQUIRE(found == 1);
    CHECK(out(b, 0, fy, fx) == 1.0f);
    CHECK(std::abs(int(fy) - 4) <= 2);
    CHECK(std::abs(int(fx) - 4) <= 2);
    if (fy != 4 || fx != 4) saw_movement = true;
  }
  CHECK(saw_movement);
}

TEST_CASE("a unit crop-rescale at the input size is the identity") {
  // Scale fixed at 1 and output side == input side: resize to the same
  // (dyadic) side, then a full-frame crop.
  Rng rng(13);
  Tensor<float> batch({2, 1, 9, 9});
  fill_uniform(batch, rng, 0.0, 1.0);
  Rng r(4);
  auto out = augment(batch, parse_augment("crop_rescale(1.0,1.0,9)"), r);
  CHECK(bit_equal(out, batch));
}

TEST_CASE("each sample draws its own augmentation stream") {
  // With shift(1) and many samples, at least two samples must land on
  // different offsets; a shared stream would move them in lockstep.
  Tensor<float> batch = Tensor<float>::zeros({32, 1, 5, 5});
  for (size_t b = 0; b < 32; ++b) batch(b, 0, 2, 2) = 1.0f;
  Rng rng(14);
  auto out = augment(batch, parse_augment("shift(1)"), rng);
  std::vector<std::pair<size_t, size_t>> spots;
  for (size_t b = 0; b < 32; ++b) {
    for (size_t y = 0; y < 5; ++y) {
      for (size_t x = 0; x < 5; ++x) {
        if (out(b, 0, y, x) != 0.0f) spots.emplace_back(y, x);
      }
    }
  }
  REQUIRE(spots.size() == 32);
  bool diverged = false;
  for (size_t b = 1; b < 32; ++b) diverged = diverged || spots[b] != spots[0];
  CHECK(diverged);
}

// ---------------------------------------------------------------------------
// resampling and slicing
// ---------------------------------------------------------------------------

TEST_CASE("bootstrap sampling is deterministic and keeps items intact") {
  auto base = synthetic_digits(100, 4, 15);
  auto a = bootstrap_sample(base, 5);
  auto b = bootstrap_sample(base, 5);
  auto c = bootstrap_sample(base, 6);
  CHECK(a.size() == 100);
  CHECK(bit_equal(a.images, b.images));
  CHECK(bit_equal(a.labels, b.labels));
  CHECK(!bit_equal(a.images, c.images));
}

TEST_CASE("bootstrap samples contain about 63 percent unique items") {
  // Pixel zero encodes the item index, so distinct values count distinct
  // source items. E[unique]/N -> 1 - 1/e for draws with replacement.
  const size_t N = 10000;
  LabeledDataset base;
  base.images = Tensor<float>({N, 1, 1, 1});
  base.labels = Tensor<int64_t>({N});
  for (size_t i = 0; i < N; ++i) {
    base.images(i) = float(i) / float(N);
    base.labels(i) = int64_t(i % 10);
  }
  auto sample = bootstrap_sample(base, 23);
  REQUIRE(sample.size() == N);
  std::vector<float> seen;
  for (size_t i = 0; i < N; ++i) {
    // labels must still belong to their items
    const size_t original = size_t(std::lround(double(sample.images(i)) * N));
    CHECK(sample.labels(i) == int64_t(original % 10));
    seen.push_back(sample.images(i));
  }
  std::sort(seen.begin(), seen.end());
  const size_t unique = size_t(
      std::unique(seen.begin(), seen.end()) - seen.begin());
  const double frac = double(unique) / double(N);
  CHECK(frac > 0.632 - 0.02);
  CHECK(frac < 0.632 + 0.02);
}

TEST_CASE("bootstrap sampling rejects an empty dataset") {
  LabeledDataset empty;
  CHECK_THROWS_AS(bootstrap_sample(empty, 1), wsnn::Error);
}

TEST_CASE("subset takes a clamped prefix") {
  auto base = synthetic_digits(10, 3, 16);
  auto head = subset(base, 4);
  REQUIRE(head.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(head.labels(i) == base.labels(i));
    for (size_t p = 0; p < 9; ++p) {
      CHECK(head.images(i * 9 + p) == base.images(i * 9 + p));
    }
  }
  auto all = subset(base, 1000000);
  CHECK(all.size() == 10);
  CHECK(bit_equal(all.images, base.images));
}

TEST_CASE("gather pulls items in the requested order") {
  auto base = make_translated_mnist(synthetic_digits(6, 28, 17), 40, 3);
  auto picked = gather(base, {4, 0, 4});
  REQUIRE(picked.size() == 3);
  CHECK(picked.labels(0) == base.labels(4));
  CHECK(picked.labels(1) == base.labels(0));
  CHECK(picked.labels(2) == base.labels(4));
  CHECK(picked.offsets[1].dx == base.offsets[0].dx);
  const size_t hw = 40 * 40;
  for (size_t p = 0; p < hw; ++p) {
    CHECK(picked.images(0 * hw + p) == base.images(4 * hw + p));
    CHECK(picked.images(1 * hw + p) == base.images(0 * hw + p));
  }
  CHECK_THROWS_AS(gather(base, {6}), ShapeError);
}
