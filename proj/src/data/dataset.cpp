#include "wsnn/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wsnn/errors.hpp"
#include "wsnn/stn.hpp"

namespace wsnn::data {

namespace {

constexpr size_t kDigitBox = 32;   // the padded digit side
constexpr size_t kClutterN = 4;    // distractor patches per cluttered image
constexpr size_t kClutterBox = 8;  // distractor patch side

void copy_padded(const float* src, size_t h, size_t w, float* dst,
                 size_t canvas, size_t dx, size_t dy, size_t pad_y,
                 size_t pad_x) {
  // src is an h x w digit; its padded 32x32 box lands at (dx, dy).
  for (size_t y = 0; y < h; ++y) {
    float* row = dst + (dy + pad_y + y) * canvas + dx + pad_x;
    const float* srow = src + y * w;
    for (size_t x = 0; x < w; ++x) row[x] = srow[x];
  }
}

}  // namespace

LabeledDataset pad_images(const LabeledDataset& base, size_t target_h,
                          size_t target_w) {
  const size_t n = base.size(), h = base.height(), w = base.width();
  if (target_h < h || target_w < w) {
    throw ConfigError("pad_images: target smaller than source");
  }
  const size_t py = (target_h - h) / 2, px = (target_w - w) / 2;
  LabeledDataset out;
  out.images = Tensor<float>({n, 1, target_h, target_w});
  out.labels = base.labels;
  out.offsets = base.offsets;
  for (size_t i = 0; i < n; ++i) {
    const float* src = base.images.data() + i * h * w;
    float* dst = out.images.data() + i * target_h * target_w;
    for (size_t y = 0; y < h; ++y) {
      std::copy(src + y * w, src + (y + 1) * w,
                dst + (y + py) * target_w + px);
    }
  }
  return out;
}

LabeledDataset make_translated_mnist(const LabeledDataset& base, size_t canvas,
                                     uint64_t seed, bool clutter) {
  if (canvas < kDigitBox) {
    throw ConfigError("make_translated_mnist: canvas " +
                      std::to_string(canvas) + " smaller than the " +
                      std::to_string(kDigitBox) + "-pixel digit box");
  }
  const size_t n = base.size(), h = base.height(), w = base.width();
  if (h > kDigitBox || w > kDigitBox) {
    throw ConfigError("make_translated_mnist: source digits exceed the digit "
                      "box");
  }
  LabeledDataset out;
  out.images = Tensor<float>({n, 1, canvas, canvas});
  out.labels = base.labels;
  out.offsets.resize(n);
  const Rng root(seed);

  for (size_t i = 0; i < n; ++i) {
    // Per-item stream: placement is independent of generation order.
    render_translated_item(base, i, canvas, root.derive(i), clutter,
                           out.images.data() + i * canvas * canvas,
                           out.offsets[i]);
  }
  return out;
}

void render_translated_item(const LabeledDataset& base, size_t item,
                            size_t canvas, Rng rng, bool clutter, float* dst,
                            LabeledDataset::Placement& placement) {
  const size_t n = base.size(), h = base.height(), w = base.width();
  const size_t pad_y = (kDigitBox - h) / 2, pad_x = (kDigitBox - w) / 2;
  const size_t range = canvas - kDigitBox;  // offsets in [0, range]

  std::fill(dst, dst + canvas * canvas, 0.0f);
  const size_t dx = rng.uniform_int(range + 1);
  const size_t dy = rng.uniform_int(range + 1);
  placement = {static_cast<int64_t>(dx), static_cast<int64_t>(dy)};
  copy_padded(base.images.data() + item * h * w, h, w, dst, canvas, dx, dy,
              pad_y, pad_x);
  if (clutter && h >= kClutterBox && w >= kClutterBox) {
    for (size_t c = 0; c < kClutterN; ++c) {
      const size_t donor = rng.uniform_int(n);
      const float* dsrc = base.images.data() + donor * h * w;
      const size_t cy = rng.uniform_int(h - kClutterBox + 1);
      const size_t cx = rng.uniform_int(w - kClutterBox + 1);
      const size_t py = rng.uniform_int(canvas - kClutterBox + 1);
      const size_t px = rng.uniform_int(canvas - kClutterBox + 1);
      for (size_t y = 0; y < kClutterBox; ++y) {
        float* row = dst + (py + y) * canvas + px;
        const float* srow = dsrc + (cy + y) * w + cx;
        for (size_t x = 0; x < kClutterBox; ++x) {
          row[x] = std::max(row[x], srow[x]);
        }
      }
    }
  }
}

Tensor<float> downsample(const Tensor<float>& x, size_t out_h, size_t out_w) {
  return stn::downsample(x, out_h, out_w);
}

NormalizationStats compute_stats(const Tensor<float>& images) {
  if (images.size() == 0) {
    throw Error("compute_stats: empty image tensor");
  }
  double sum = 0.0, sum_sq = 0.0;
  for (size_t i = 0; i < images.size(); ++i) {
    const double v = images(i);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(images.size());
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  NormalizationStats stats;
  stats.mean = static_cast<float>(mean);
  stats.std = static_cast<float>(std::sqrt(var));
  if (stats.std <= 0.0f) {
    throw Error("compute_stats: zero variance (constant images)");
  }
  return stats;
}

void normalize(Tensor<float>& images, const NormalizationStats& stats) {
  const float inv = 1.0f / stats.std;
  for (size_t i = 0; i < images.size(); ++i) {
    images(i) = (images(i) - stats.mean) * inv;
  }
}

void denormalize(Tensor<float>& images, const NormalizationStats& stats) {
  for (size_t i = 0; i < images.size(); ++i) {
    images(i) = images(i) * stats.std + stats.mean;
  }
}

AugmentPolicy parse_augment(const std::string& text) {
  AugmentPolicy p;
  if (text == "none" || text.empty()) {
    return p;
  }
  int max_px = 0;
  double a = 0, b = 0;
  unsigned out = 0;
  if (std::sscanf(text.c_str(), "shift(%d)", &max_px) == 1) {
    if (max_px < 0) {
      throw ConfigError("augment: shift distance must be >= 0");
    }
    p.kind = AugmentPolicy::Kind::shift;
    p.max_px = max_px;
    return p;
  }
  if (std::sscanf(text.c_str(), "hflip(%lf)", &a) == 1) {
    if (a < 0.0 || a > 1.0) {
      throw ConfigError("augment: hflip probability outside [0,1]");
    }
    p.kind = AugmentPolicy::Kind::hflip;
    p.flip_p = a;
    return p;
  }
  if (std::sscanf(text.c_str(), "crop_rescale(%lf,%lf,%u)", &a, &b, &out) ==
      3) {
    if (!(a > 0.0) || a > b || out == 0) {
      throw ConfigError("augment: crop_rescale wants 0 < lo <= hi and a "
                        "positive output size");
    }
    p.kind = AugmentPolicy::Kind::crop_rescale;
    p.lo = a;
    p.hi = b;
    p.out = out;
    return p;
  }
  throw ConfigError("augment: cannot parse policy '" + text + "'");
}

namespace {

Tensor<float> augment_one_shift(const float* src, size_t c, size_t h, size_t w,
                                int dx, int dy) {
  Tensor<float> out({1, c, h, w});
  for (size_t ch = 0; ch < c; ++ch) {
    const float* plane = src + ch * h * w;
    float* dplane = out.data() + ch * h * w;
    for (size_t y = 0; y < h; ++y) {
      const long long sy = static_cast<long long>(y) - dy;
      if (sy < 0 || sy >= static_cast<long long>(h)) continue;
      for (size_t x = 0; x < w; ++x) {
        const long long sx = static_cast<long long>(x) - dx;
        if (sx < 0 || sx >= static_cast<long long>(w)) continue;
        dplane[y * w + x] = plane[sy * w + sx];
      }
    }
  }
  return out;
}

}  // namespace

Tensor<float> augment(const Tensor<float>& batch, const AugmentPolicy& policy,
                      Rng& rng) {
  if (batch.rank() != 4) {
    throw ShapeError("augment: expected [BxCxHxW], got " +
                     detail::shape_str(batch.shape()));
  }
  if (policy.kind == AugmentPolicy::Kind::none) {
    return batch;
  }
  const size_t B = batch.dim(0), C = batch.dim(1);
  const size_t H = batch.dim(2), W = batch.dim(3);
  const size_t out_side =
      policy.kind == AugmentPolicy::Kind::crop_rescale ? policy.out : 0;
  Tensor<float> out(out_side ? std::vector<size_t>{B, C, out_side, out_side}
                             : batch.shape());

  for (size_t i = 0; i < B; ++i) {
    Rng item_rng(rng.next_u64());
    const float* src = batch.data() + i * C * H * W;
    switch (policy.kind) {
      case AugmentPolicy::Kind::none:
        break;
      case AugmentPolicy::Kind::shift: {
        const int m = policy.max_px;
        const int dx = static_cast<int>(item_rng.uniform_int(2 * m + 1)) - m;
        const int dy = static_cast<int>(item_rng.uniform_int(2 * m + 1)) - m;
        Tensor<float> one = augment_one_shift(src, C, H, W, dx, dy);
        std::copy(one.data(), one.data() + one.size(),
                  out.data() + i * C * H * W);
        break;
      }
      case AugmentPolicy::Kind::hflip: {
        const bool flip = item_rng.bernoulli(policy.flip_p);
        float* dst = out.data() + i * C * H * W;
        for (size_t ch = 0; ch < C; ++ch) {
          for (size_t y = 0; y < H; ++y) {
            const float* row = src + (ch * H + y) * W;
            float* drow = dst + (ch * H + y) * W;
            for (size_t x = 0; x < W; ++x) {
              drow[x] = flip ? row[W - 1 - x] : row[x];
            }
          }
        }
        break;
      }
      case AugmentPolicy::Kind::crop_rescale: {
        const double s = item_rng.uniform(policy.lo, policy.hi);
        const size_t sh = std::max<size_t>(
            1, static_cast<size_t>(std::lround(s * static_cast<double>(H))));
        const size_t sw = std::max<size_t>(
            1, static_cast<size_t>(std::lround(s * static_cast<double>(W))));
        Tensor<float> one({1, C, H, W});
        std::copy(src, src + C * H * W, one.data());
        Tensor<float> scaled = stn::downsample(one, sh, sw);
        // Crop (or zero-pad) to the output side at a random valid corner.
        float* dst = out.data() + i * C * out_side * out_side;
        std::fill(dst, dst + C * out_side * out_side, 0.0f);
        const size_t copy_h = std::min(sh, out_side);
        const size_t copy_w = std::min(sw, out_side);
        const size_t sy = sh > out_side ? item_rng.uniform_int(sh - out_side + 1) : 0;
        const size_t sx = sw > out_side ? item_rng.uniform_int(sw - out_side + 1) : 0;
        const size_t oy = sh < out_side ? item_rng.uniform_int(out_side - sh + 1) : 0;
        const size_t ox = sw < out_side ? item_rng.uniform_int(out_side - sw + 1) : 0;
        for (size_t ch = 0; ch < C; ++ch) {
          for (size_t y = 0; y < copy_h; ++y) {
            const float* srow = scaled.data() + (ch * sh + sy + y) * sw + sx;
            float* drow = dst + (ch * out_side + oy + y) * out_side + ox;
            std::copy(srow, srow + copy_w, drow);
          }
        }
        break;
      }
    }
  }
  return out;
}

LabeledDataset gather(const LabeledDataset& ds,
                      const std::vector<size_t>& indices) {
  const size_t h = ds.height(), w = ds.width();
  LabeledDataset out;
  out.images = Tensor<float>({indices.size(), 1, h, w});
  out.labels = Tensor<int64_t>({indices.size()});
  if (!ds.offsets.empty()) out.offsets.resize(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const size_t j = indices[i];
    if (j >= ds.size()) {
      throw ShapeError("gather: index " + std::to_string(j) +
                       " out of range");
    }
    std::copy(ds.images.data() + j * h * w, ds.images.data() + (j + 1) * h * w,
              out.images.data() + i * h * w);
    out.labels(i) = ds.labels(j);
    if (!ds.offsets.empty()) out.offsets[i] = ds.offsets[j];
  }
  return out;
}

LabeledDataset bootstrap_sample(const LabeledDataset& ds, uint64_t seed) {
  const size_t n = ds.size();
  if (n == 0) {
    throw Error("bootstrap_sample: empty dataset");
  }
  Rng rng(seed);
  std::vector<size_t> indices(n);
  for (auto& idx : indices) idx = rng.uniform_int(n);
  return gather(ds, indices);
}

LabeledDataset subset(const LabeledDataset& ds, size_t n) {
  n = std::min(n, ds.size());
  std::vector<size_t> indices(n);
  for (size_t i = 0; i < n; ++i) indices[i] = i;
  return gather(ds, indices);
}

}  // namespace wsnn::data
