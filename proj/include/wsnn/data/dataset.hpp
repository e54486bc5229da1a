#pragma once

#include "wsnn/data/mnist_idx.hpp"
#include "wsnn/rng.hpp"

namespace wsnn::data {

// Zero-pads each image symmetrically to target_h x target_w (MNIST 28x28 ->
// 32x32 adds 2 black pixels per side).
LabeledDataset pad_images(const LabeledDataset& base, size_t target_h,
                          size_t target_w);

// Synthesizes the translated digit set: every digit is padded to 32x32 and
// dropped onto a black canvas x canvas background at integer offsets drawn
// uniformly from [0, canvas-32] (dx first, then dy), using an RNG stream
// derived per item so the result is independent of generation order. With
// clutter=true, four 8x8 crops of other digits are also scattered onto the
// canvas (merged by max, so pixels stay in [0,1]).
LabeledDataset make_translated_mnist(const LabeledDataset& base, size_t canvas,
                                     uint64_t seed, bool clutter = false);

// Renders one item of the translated set into dst (a canvas*canvas plane,
// zeroed by this call). Draws exactly the stream make_translated_mnist
// consumes, so callers that synthesize batches lazily from `Rng(seed)
// .derive(item)` reproduce the materialized dataset bit for bit.
void render_translated_item(const LabeledDataset& base, size_t item,
                            size_t canvas, Rng rng, bool clutter, float* dst,
                            LabeledDataset::Placement& placement);

// Bilinear resize with the same align-corners convention as the sampler in
// module stn (this is the same operation the attention models use on their
// localizer input).
Tensor<float> downsample(const Tensor<float>& x, size_t out_h, size_t out_w);

// Scalar whitening statistics computed over every pixel of the training
// split; eval splits must be normalized with the TRAIN stats.
struct NormalizationStats {
  float mean = 0.0f;
  float std = 1.0f;
};

NormalizationStats compute_stats(const Tensor<float>& images);
void normalize(Tensor<float>& images, const NormalizationStats& stats);
void denormalize(Tensor<float>& images, const NormalizationStats& stats);

// Per-sample train-time augmentation.
struct AugmentPolicy {
  enum class Kind { none, shift, hflip, crop_rescale };
  Kind kind = Kind::none;
  int max_px = 0;       // shift: offsets uniform in [-max_px, max_px]
  double flip_p = 0.5;  // hflip
  double lo = 1.0, hi = 1.0;  // crop_rescale: scale range
  size_t out = 0;             // crop_rescale: output side (0 = input size)
};

// Accepts "none", "shift(N)", "hflip(P)", "crop_rescale(LO,HI,OUT)".
AugmentPolicy parse_augment(const std::string& text);

// Applies the policy to a batch [B x C x H x W]; each sample gets its own
// stream seeded from the caller's RNG (which advances once per sample).
Tensor<float> augment(const Tensor<float>& batch, const AugmentPolicy& policy,
                      Rng& rng);

// N draws with replacement from ds, deterministic per seed.
LabeledDataset bootstrap_sample(const LabeledDataset& ds, uint64_t seed);

// First n items (n > size() is clamped).
LabeledDataset subset(const LabeledDataset& ds, size_t n);

// Items whose index satisfies keep(i); used to build unbalanced splits.
LabeledDataset gather(const LabeledDataset& ds,
                      const std::vector<size_t>& indices);

}  // namespace wsnn::data
