#include "wsnn/harness/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "wsnn/errors.hpp"

namespace wsnn::harness {

const char* MetricsReport::csv_header() {
  return "epoch,train_loss,test_loss,top1,top5,seconds";
}

std::string MetricsReport::csv_row(const EpochRow& row, bool zero_seconds) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f,%.4f,%.4f,%.3f",
                static_cast<long long>(row.epoch), row.train_loss,
                row.test_loss, row.top1, row.top5,
                zero_seconds ? 0.0 : row.seconds);
  return buf;
}

std::string MetricsReport::to_csv(bool zero_seconds) const {
  std::string out = csv_header();
  out.push_back('\n');
  for (const auto& row : rows) {
    out += csv_row(row, zero_seconds);
    out.push_back('\n');
  }
  return out;
}

void MetricsReport::write_csv(const std::string& path,
                              bool zero_seconds) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open CSV for writing: " + path);
  f << to_csv(zero_seconds);
  if (!f) throw IoError("short write to CSV: " + path);
}

double MetricsReport::best_top1() const {
  double best = 0.0;
  for (const auto& row : rows) best = std::max(best, row.top1);
  return best;
}

size_t topk_rank(const float* logits, size_t n_classes, int64_t label) {
  if (label < 0 || static_cast<size_t>(label) >= n_classes)
    throw Error("topk_rank: label " + std::to_string(label) +
                " out of range for " + std::to_string(n_classes) + " classes");
  const size_t y = static_cast<size_t>(label);
  const float ly = logits[y];
  size_t rank = 0;
  for (size_t c = 0; c < n_classes; ++c) {
    if (logits[c] > ly || (logits[c] == ly && c < y)) ++rank;
  }
  return rank;
}

double average_precision(const std::vector<float>& scores,
                         const std::vector<uint8_t>& relevant) {
  if (scores.size() != relevant.size())
    throw ShapeError("average_precision: scores/relevance size mismatch");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  size_t positives_seen = 0;
  double precision_sum = 0.0;
  for (size_t i = 0; i < order.size(); ++i) {
    if (!relevant[order[i]]) continue;
    ++positives_seen;
    precision_sum += static_cast<double>(positives_seen) /
                     static_cast<double>(i + 1);
  }
  if (positives_seen == 0) return 0.0;
  return precision_sum / static_cast<double>(positives_seen);
}

double mean_average_precision(const Tensor<float>& scores,
                              const Tensor<int64_t>& labels) {
  if (scores.rank() != 2)
    throw ShapeError("mean_average_precision: scores must be [N x C]");
  const size_t n = scores.shape()[0];
  const size_t classes = scores.shape()[1];
  if (labels.size() != n)
    throw ShapeError("mean_average_precision: label count mismatch");

  double ap_sum = 0.0;
  size_t classes_present = 0;
  std::vector<float> column(n);
  std::vector<uint8_t> relevant(n);
  for (size_t c = 0; c < classes; ++c) {
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      column[i] = scores.data()[i * classes + c];
      relevant[i] =
          static_cast<uint8_t>(labels.data()[i] == static_cast<int64_t>(c));
      any = any || relevant[i];
    }
    if (!any) continue;
    ++classes_present;
    ap_sum += average_precision(column, relevant);
  }
  if (classes_present == 0) return 0.0;
  return ap_sum / static_cast<double>(classes_present);
}

}  // namespace wsnn::harness
