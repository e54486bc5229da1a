#pragma once

#include <iosfwd>
#include <string>

#include "wsnn/data/dataset.hpp"
#include "wsnn/harness/checkpoint.hpp"
#include "wsnn/harness/config.hpp"
#include "wsnn/harness/metrics.hpp"
#include "wsnn/losses.hpp"

namespace wsnn::harness {

// A deterministic, lazily-rendered view of one experiment split. Holding the
// compact base digits and rendering canvases per batch keeps the memory cost
// of big-canvas experiments at one batch instead of the whole split, while
// the per-item RNG streams make the result identical to materializing the
// translated set up front.
//
// Geometry: base digits (28x28 or smaller) are centered in a 32x32 box and
// placed on a canvas x canvas background at per-item random offsets (a 32
// canvas fixes the offset at 0, i.e. plain padded MNIST). resize != 0
// bilinearly resamples the rendered canvas down to resize x resize.
class BatchSource {
 public:
  BatchSource(data::LabeledDataset base, size_t canvas, uint64_t translate_seed,
              bool online_translate, bool clutter, size_t resize);

  size_t size() const { return base_.size(); }
  // Side of the images fill() produces.
  size_t side() const { return resize_ != 0 ? resize_ : canvas_; }
  size_t canvas() const { return canvas_; }

  // Renders items indices[0..count) into images [count x 1 x side x side]
  // and labels [count] (both reallocated here). `epoch` (0-based) selects
  // the placement stream only when online translation is on; a frozen source
  // renders identically for every epoch, and epoch 0 of an online source
  // equals the frozen rendering.
  void fill(const size_t* indices, size_t count, uint64_t epoch,
            Tensor<float>& images, Tensor<int64_t>& labels) const;

  // Where item `index`'s digit box lands at the given epoch.
  data::LabeledDataset::Placement placement(size_t index,
                                            uint64_t epoch) const;

  // Streaming whitening statistics over the full epoch-0 rendering.
  data::NormalizationStats compute_stats(size_t batch_size = 256) const;
  // Once set, fill() standardizes every image it produces.
  void set_normalization(const data::NormalizationStats& stats);

  const data::LabeledDataset& base() const { return base_; }

 private:
  data::LabeledDataset base_;
  size_t canvas_;
  Rng root_;
  bool online_;
  bool clutter_;
  size_t resize_;
  bool normalize_ = false;
  data::NormalizationStats stats_;
};

// The two splits of one experiment, assembled per the config: IDX load,
// optional train subset, optional deliberate class unbalancing, canvas /
// clutter / resize geometry, optional train-stat normalization of both.
struct Sources {
  BatchSource train;
  BatchSource test;
};
Sources assemble_sources(const Config& cfg);

// "c:f,c:f" -> keep only the first fraction f of each listed class's items
// (all others stay complete). Used to build deliberately unbalanced splits.
data::LabeledDataset unbalance(const data::LabeledDataset& ds,
                               const std::string& spec);

enum class LossKind { cross_entropy, mse, multilabel_entropy };
LossKind parse_loss(const std::string& name);
// Dispatches to the loss functions, building one-hot targets where needed.
losses::LossOutput<float> compute_loss(LossKind kind,
                                       const Tensor<float>& predictions,
                                       const Tensor<int64_t>& labels);

// One deterministic eval-mode pass. If logits_out is non-null it receives
// the [N x C] model outputs (for ensembling / AP analysis).
EvalStats evaluate(nn::Layer<float>& model, const BatchSource& src,
                   LossKind loss, size_t batch_size,
                   Tensor<float>* logits_out = nullptr);

struct TrainResult {
  Checkpoint best;        // best-by-test-top-1 parameters + meta
  MetricsReport report;   // every completed epoch
  int64_t best_epoch = 0; // 1-based epoch the checkpoint came from
  double best_top1 = 0.0;
};

// The experiment driver: builds the model (or the fine-tuning composition
// when finetune_from is set), runs shuffled mini-batch epochs with the
// configured optimizer, evaluates after each epoch, early-stops on test
// top-1, and — when cfg out is non-empty — writes metrics.csv, train.log and
// model.wsnn there as results complete. `echo` mirrors log lines (nullable).
TrainResult train(const Config& cfg, const BatchSource& train_src,
                  const BatchSource& test_src, std::ostream* echo = nullptr);

}  // namespace wsnn::harness
