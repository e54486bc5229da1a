#include "wsnn/harness/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "wsnn/errors.hpp"

namespace wsnn::harness {

EnsembleMode parse_ensemble_mode(const std::string& name) {
  if (name == "vote") return EnsembleMode::vote;
  if (name == "mean_logit") return EnsembleMode::mean_logit;
  throw ConfigError("unknown ensemble mode: " + name);
}

std::vector<double> class_priors(const Tensor<int64_t>& labels,
                                 size_t classes) {
  if (labels.size() == 0) throw Error("class_priors: empty labels");
  std::vector<double> priors(classes, 0.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    const int64_t y = labels.data()[i];
    if (y < 0 || static_cast<size_t>(y) >= classes)
      throw Error("class_priors: label out of range");
    priors[static_cast<size_t>(y)] += 1.0;
  }
  for (auto& p : priors) p /= static_cast<double>(labels.size());
  return priors;
}

namespace {

void check_priors(const std::vector<double>& priors, size_t classes,
                  const char* which) {
  if (priors.size() != classes)
    throw ConfigError(std::string(which) + " priors: expected " +
                      std::to_string(classes) + " entries");
  double sum = 0.0;
  for (const double p : priors) {
    if (!(p > 0.0))
      throw ConfigError(std::string(which) +
                        " priors must be strictly positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw ConfigError(std::string(which) + " priors must sum to 1");
}

// softmax(row) * target/train, written into `probs`. Operating on the
// softmax keeps the reweighting meaningful for both raw logits and
// log-probabilities (softmax of a log-softmax row is the probability
// vector itself).
void corrected_probs(const float* row, size_t classes,
                     const PriorCorrection& c, std::vector<double>& probs) {
  float hi = row[0];
  for (size_t k = 1; k < classes; ++k) hi = std::max(hi, row[k]);
  double sum = 0.0;
  for (size_t k = 0; k < classes; ++k) {
    probs[k] = std::exp(static_cast<double>(row[k]) - hi);
    sum += probs[k];
  }
  for (size_t k = 0; k < classes; ++k)
    probs[k] = probs[k] / sum * c.target_priors[k] / c.train_priors[k];
}

template <typename V>
size_t argmax_lowest(const V& vals, size_t n) {
  size_t best = 0;
  for (size_t k = 1; k < n; ++k)
    if (vals[k] > vals[best]) best = k;
  return best;
}

}  // namespace

std::vector<int64_t> ensemble_predict(
    const std::vector<Tensor<float>>& per_model_scores, EnsembleMode mode,
    const PriorCorrection* correction) {
  if (per_model_scores.empty())
    throw ConfigError("ensemble_predict: need at least one model");
  const Tensor<float>& first = per_model_scores.front();
  if (first.rank() != 2)
    throw ShapeError("ensemble_predict: scores must be [N x C]");
  const size_t n = first.dim(0);
  const size_t classes = first.dim(1);
  for (const auto& t : per_model_scores)
    if (t.shape() != first.shape())
      throw ShapeError("ensemble_predict: score shapes disagree");
  if (correction != nullptr) {
    check_priors(correction->train_priors, classes, "train");
    check_priors(correction->target_priors, classes, "target");
  }

  std::vector<int64_t> prediction(n);
  std::vector<double> probs(classes);
  std::vector<double> combined(classes);
  std::vector<size_t> votes(classes);

  for (size_t i = 0; i < n; ++i) {
    std::fill(combined.begin(), combined.end(), 0.0);
    std::fill(votes.begin(), votes.end(), size_t{0});
    for (const auto& model : per_model_scores) {
      const float* row = model.data() + i * classes;
      if (correction != nullptr) {
        corrected_probs(row, classes, *correction, probs);
        for (size_t k = 0; k < classes; ++k) combined[k] += probs[k];
        ++votes[argmax_lowest(probs, classes)];
      } else {
        for (size_t k = 0; k < classes; ++k)
          combined[k] += static_cast<double>(row[k]);
        ++votes[argmax_lowest(row, classes)];
      }
    }
    prediction[i] = static_cast<int64_t>(
        mode == EnsembleMode::vote ? argmax_lowest(votes, classes)
                                   : argmax_lowest(combined, classes));
  }
  return prediction;
}

}  // namespace wsnn::harness
