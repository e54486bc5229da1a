#pragma once

#include "wsnn/nn/layer.hpp"

namespace wsnn::wsl {

// Multiple-instance head: collapses a per-class score map [B x C x h x w] to
// [B x C] by taking each class's spatial maximum. Backward routes the whole
// class gradient to the winning location (first occurrence on ties), so only
// the max-scoring region learns from each example.
template <typename T>
class MilMaxPool : public nn::Layer<T> {
 public:
  const char* kind() const override { return "mil_max_pool"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<nn::Layer<T>> clone() const override {
    return std::make_unique<MilMaxPool<T>>(*this);
  }

 private:
  std::vector<size_t> in_shape_;
  Tensor<int64_t> argmax_;  // flat spatial index per (b, c)
  bool have_cache_ = false;
};

// Top-k/bottom-k head: per class, mean of the k highest scores plus mean of
// the k lowest, so both positive and negative evidence contribute. With k=1
// this is exactly max + min. Selection ties break toward the lower
// row-major index; backward gives each selected location gradient 1/k.
template <typename T>
class WeldonPool : public nn::Layer<T> {
 public:
  explicit WeldonPool(size_t k);
  const char* kind() const override { return "weldon_pool"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<nn::Layer<T>> clone() const override {
    return std::make_unique<WeldonPool<T>>(*this);
  }
  size_t k() const { return k_; }

 private:
  size_t k_;
  std::vector<size_t> in_shape_;
  Tensor<int64_t> picks_;  // [B x C x 2k] selected flat spatial indices
  bool have_cache_ = false;
};

// Forward-only conveniences over the layers above.
template <typename T>
Tensor<T> mil_max_pool(const Tensor<T>& score_map) {
  MilMaxPool<T> head;
  return head.forward(score_map);
}

template <typename T>
Tensor<T> weldon_pool(const Tensor<T>& score_map, size_t k) {
  WeldonPool<T> head(k);
  return head.forward(score_map);
}

}  // namespace wsnn::wsl
