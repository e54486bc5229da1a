#include "wsnn/losses.hpp"

#include <algorithm>
#include <cmath>

namespace wsnn::losses {

namespace {

// log(1 + exp(v)) without overflow for large |v|.
template <typename T>
T softplus(T v) {
  return std::max(v, T(0)) + std::log1p(std::exp(-std::fabs(v)));
}

template <typename T>
T stable_sigmoid(T v) {
  if (v >= T(0)) {
    const T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
void require_rank2(const Tensor<T>& x, const char* who) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(who) + ": expected [BxC] predictions, got " +
                     detail::shape_str(x.shape()));
  }
}

}  // namespace

template <typename T>
LossOutput<T> mse(const Tensor<T>& x, const Tensor<T>& y) {
  require_rank2(x, "mse");
  if (x.shape() != y.shape()) {
    throw ShapeError("mse: prediction shape " + detail::shape_str(x.shape()) +
                     " != target shape " + detail::shape_str(y.shape()));
  }
  const size_t B = x.dim(0), n = x.dim(1);
  LossOutput<T> out{T(0), Tensor<T>(x.shape())};
  const T scale = T(1) / static_cast<T>(n * B);
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const T d = x(i) - y(i);
    acc += static_cast<double>(d) * static_cast<double>(d);
    out.grad(i) = T(2) * d * scale;
  }
  out.value = static_cast<T>(acc / static_cast<double>(n * B));
  return out;
}

template <typename T>
LossOutput<T> cross_entropy(const Tensor<T>& x, const Tensor<int64_t>& y) {
  require_rank2(x, "cross_entropy");
  const size_t B = x.dim(0), C = x.dim(1);
  if (y.rank() != 1 || y.dim(0) != B) {
    throw ShapeError("cross_entropy: expected " + std::to_string(B) +
                     " labels, got " + detail::shape_str(y.shape()));
  }
  LossOutput<T> out{T(0), Tensor<T>(x.shape())};
  const T inv_b = T(1) / static_cast<T>(B);
  double acc = 0.0;
  for (size_t b = 0; b < B; ++b) {
    const int64_t label = y(b);
    if (label < 0 || label >= static_cast<int64_t>(C)) {
      throw Error("cross_entropy: label " + std::to_string(label) +
                  " out of range [0," + std::to_string(C) + ")");
    }
    const T* row = x.data() + b * C;
    T mx = row[0];
    for (size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    T sum_exp = T(0);
    for (size_t c = 0; c < C; ++c) sum_exp += std::exp(row[c] - mx);
    const T lse = mx + std::log(sum_exp);
    acc += static_cast<double>(lse - row[label]);
    T* grow = out.grad.data() + b * C;
    for (size_t c = 0; c < C; ++c) {
      grow[c] = std::exp(row[c] - lse) * inv_b;  // softmax / B
    }
    grow[label] -= inv_b;
  }
  out.value = static_cast<T>(acc / static_cast<double>(B));
  return out;
}

template <typename T>
LossOutput<T> multilabel_entropy(const Tensor<T>& x, const Tensor<T>& y) {
  require_rank2(x, "multilabel_entropy");
  if (x.shape() != y.shape()) {
    throw ShapeError("multilabel_entropy: prediction shape " +
                     detail::shape_str(x.shape()) + " != target shape " +
                     detail::shape_str(y.shape()));
  }
  const size_t B = x.dim(0);
  LossOutput<T> out{T(0), Tensor<T>(x.shape())};
  const T inv_b = T(1) / static_cast<T>(B);
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const T t = y(i);
    if (t != T(0) && t != T(1)) {
      throw Error("multilabel_entropy: target " + std::to_string(t) +
                  " is not binary");
    }
    const T v = x(i);
    acc += static_cast<double>(t * softplus(-v) + (T(1) - t) * softplus(v));
    out.grad(i) = (stable_sigmoid(v) - t) * inv_b;
  }
  out.value = static_cast<T>(acc / static_cast<double>(B));
  return out;
}

#define WSNN_INSTANTIATE_LOSSES(T)                                           \
  template LossOutput<T> mse<T>(const Tensor<T>&, const Tensor<T>&);         \
  template LossOutput<T> cross_entropy<T>(const Tensor<T>&,                  \
                                          const Tensor<int64_t>&);           \
  template LossOutput<T> multilabel_entropy<T>(const Tensor<T>&,             \
                                               const Tensor<T>&);

WSNN_INSTANTIATE_LOSSES(float)
WSNN_INSTANTIATE_LOSSES(double)

}  // namespace wsnn::losses
