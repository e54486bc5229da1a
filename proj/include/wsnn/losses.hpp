#pragma once

#include "wsnn/tensor.hpp"

namespace wsnn::losses {

// Scalar loss plus its gradient with respect to the predictions. All three
// criteria reduce by mean over the batch so the learning-rate scale does not
// depend on batch size.
template <typename T>
struct LossOutput {
  T value;
  Tensor<T> grad;  // same shape as the predictions
};

// Mean over the batch of the per-example mean squared error
// (1/n) sum_i (x_i - y_i)^2; grad = 2(x-y)/(n*B).
template <typename T>
LossOutput<T> mse(const Tensor<T>& x, const Tensor<T>& y);

// Mean over the batch of -log softmax(x)[y]; grad = (softmax(x)-onehot(y))/B.
// Computed with max subtraction, so feeding already-log-softmaxed scores is
// fine (log softmax is idempotent).
template <typename T>
LossOutput<T> cross_entropy(const Tensor<T>& x, const Tensor<int64_t>& y);

// One-versus-all max-entropy loss over independent binary targets:
// per class, y*softplus(-x) + (1-y)*softplus(x), summed over classes and
// averaged over the batch; grad = (sigmoid(x)-y)/B. The softplus form stays
// finite for any logit magnitude.
template <typename T>
LossOutput<T> multilabel_entropy(const Tensor<T>& x, const Tensor<T>& y);

}  // namespace wsnn::losses
