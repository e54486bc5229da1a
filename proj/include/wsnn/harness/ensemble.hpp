#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsnn/tensor.hpp"

namespace wsnn::harness {

enum class EnsembleMode { vote, mean_logit };
EnsembleMode parse_ensemble_mode(const std::string& name);

// Fraction of items per class (sums to 1). Throws on empty input.
std::vector<double> class_priors(const Tensor<int64_t>& labels,
                                 size_t classes);

// Reweighting applied to each model's predictions before combining:
// p'_c proportional to softmax(scores)_c * target_prior_c / train_prior_c.
// Both vectors must be strictly positive and sum to 1.
struct PriorCorrection {
  std::vector<double> train_priors;
  std::vector<double> target_priors;
};

// Combines per-model [N x C] score matrices into one prediction per item:
//   vote        plurality over per-model argmax (ties -> lowest class index)
//   mean_logit  argmax of the across-model mean (of corrected probabilities
//               when a correction is given, of raw scores otherwise)
// Per-model argmax also breaks ties toward the lowest class index.
std::vector<int64_t> ensemble_predict(
    const std::vector<Tensor<float>>& per_model_scores, EnsembleMode mode,
    const PriorCorrection* correction = nullptr);

}  // namespace wsnn::harness
