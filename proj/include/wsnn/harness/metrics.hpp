#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsnn/tensor.hpp"

namespace wsnn::harness {

// One completed training epoch. Accuracies are percentages in [0, 100].
struct EpochRow {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double seconds = 0.0;
};

// Per-epoch training record; serialized as CSV (and mirrored into a
// human-readable log by the train loop).
struct MetricsReport {
  std::vector<EpochRow> rows;

  static const char* csv_header();  // epoch,train_loss,test_loss,top1,top5,seconds
  static std::string csv_row(const EpochRow& row, bool zero_seconds);
  // Full file contents. zero_seconds replaces wall-clock values with 0.000 so
  // repeated runs are byte-identical.
  std::string to_csv(bool zero_seconds) const;
  void write_csv(const std::string& path, bool zero_seconds) const;

  // Highest test top-1 over all rows (0 when empty).
  double best_top1() const;
};

// Rank of the true class when logits are sorted descending, counting an
// equal-valued class as ahead only if its index is lower (first-index
// tie-break). The prediction is "correct at k" iff the rank is < k.
size_t topk_rank(const float* logits, size_t n_classes, int64_t label);

// Average precision for one class: precision at each positive's rank,
// averaged over positives (0 if there are none). Ties keep input order.
double average_precision(const std::vector<float>& scores,
                         const std::vector<uint8_t>& relevant);

// Mean AP over classes of a [N x C] score matrix against integer labels;
// classes absent from `labels` are skipped.
double mean_average_precision(const Tensor<float>& scores,
                              const Tensor<int64_t>& labels);

// Aggregate of one evaluation pass.
struct EvalStats {
  double loss = 0.0;
  double top1 = 0.0;   // percent
  double top5 = 0.0;   // percent
  double mean_ap = 0.0;
  size_t count = 0;
};

}  // namespace wsnn::harness
