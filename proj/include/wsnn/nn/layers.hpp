#pragma once

#include "wsnn/nn/layer.hpp"

namespace wsnn::nn {

// y = x * W^T + b, weight stored [out x in].
template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(size_t in_features, size_t out_features);
  const char* kind() const override { return "linear"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  void init_params(InitScheme scheme, Rng& rng) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Linear<T>>(*this);
  }

  size_t in_features() const { return in_; }
  size_t out_features() const { return out_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  size_t in_, out_;
  Tensor<T> weight_, bias_, dweight_, dbias_;
  Tensor<T> input_;
  bool have_cache_ = false;
};

enum class Act { relu, sigmoid, tanh };
const char* act_name(Act a);

// Pointwise nonlinearity. relu keeps the input for its mask; sigmoid/tanh
// keep the output since their derivatives are cheapest in terms of it.
template <typename T>
class Activation : public Layer<T> {
 public:
  explicit Activation(Act kind) : kind_(kind) {}
  const char* kind() const override { return act_name(kind_); }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Activation<T>>(*this);
  }
  Act act() const { return kind_; }

 private:
  Act kind_;
  Tensor<T> cache_;
  bool have_cache_ = false;
};

// Cross-correlation (no kernel flip) with per-filter bias, lowered to
// im2col + GEMM per image. Weight stored [K x C x kh x kw]; its row-major
// flattening is exactly the [K x (C*kh*kw)] GEMM operand.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(size_t in_channels, size_t out_channels, size_t kh, size_t kw,
         size_t stride_h = 1, size_t stride_w = 1, size_t pad_h = 0,
         size_t pad_w = 0);
  const char* kind() const override { return "conv2d"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  void init_params(InitScheme scheme, Rng& rng) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Conv2d<T>>(*this);
  }

  size_t in_channels() const { return c_in_; }
  size_t out_channels() const { return c_out_; }
  size_t kernel_h() const { return kh_; }
  size_t kernel_w() const { return kw_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  size_t c_in_, c_out_, kh_, kw_, sh_, sw_, ph_, pw_;
  Tensor<T> weight_, bias_, dweight_, dbias_;
  Tensor<T> input_;
  bool have_cache_ = false;
};

// Max pooling; backward routes each window's gradient to the stored argmax
// (first occurrence within the window on ties).
template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  MaxPool2d(size_t kh, size_t kw, size_t stride_h, size_t stride_w,
            size_t pad_h = 0, size_t pad_w = 0);
  explicit MaxPool2d(size_t k) : MaxPool2d(k, k, k, k, 0, 0) {}
  const char* kind() const override { return "maxpool2d"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<MaxPool2d<T>>(*this);
  }

 private:
  size_t kh_, kw_, sh_, sw_, ph_, pw_;
  std::vector<size_t> in_shape_;
  Tensor<int64_t> argmax_;  // flat index into the input plane, per output cell
  bool have_cache_ = false;
};

// Average pooling over full windows (zero padding counts toward the mean);
// backward spreads the gradient uniformly.
template <typename T>
class AvgPool2d : public Layer<T> {
 public:
  AvgPool2d(size_t kh, size_t kw, size_t stride_h, size_t stride_w,
            size_t pad_h = 0, size_t pad_w = 0);
  explicit AvgPool2d(size_t k) : AvgPool2d(k, k, k, k, 0, 0) {}
  const char* kind() const override { return "avgpool2d"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<AvgPool2d<T>>(*this);
  }

 private:
  size_t kh_, kw_, sh_, sw_, ph_, pw_;
  std::vector<size_t> in_shape_;
  bool have_cache_ = false;
};

// Per-channel normalization over (B, H, W) with learnable gamma/beta.
// Train mode uses batch statistics (biased variance, eps inside the sqrt) and
// updates running stats with momentum 0.1; eval mode uses running stats.
template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  explicit BatchNorm2d(size_t channels, T eps = T(1e-5), T momentum = T(0.1));
  const char* kind() const override { return "batchnorm2d"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  std::vector<NamedState<T>> state() override;
  void init_params(InitScheme scheme, Rng& rng) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<BatchNorm2d<T>>(*this);
  }

 private:
  size_t channels_;
  T eps_, momentum_;
  Tensor<T> gamma_, beta_, dgamma_, dbeta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> input_, batch_mean_, batch_var_;
  bool have_cache_ = false;
  bool cached_train_ = false;  // which statistics the cached forward used
};

// Inverted dropout: train zeroes with probability p and scales survivors by
// 1/(1-p); eval is the identity. The mask comes from the layer's seeded RNG
// stream and is cached for backward. freeze_mask keeps the current mask for
// subsequent forwards (gradient checking needs a fixed mask).
template <typename T>
class Dropout : public Layer<T> {
 public:
  explicit Dropout(double rate);
  const char* kind() const override { return "dropout"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void seed_runtime(uint64_t seed) override { rng_.reseed(seed); }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Dropout<T>>(*this);
  }
  void freeze_mask(bool frozen) { frozen_ = frozen; }

 private:
  double rate_;
  Rng rng_;
  Tensor<uint8_t> mask_;
  bool frozen_ = false;
  bool have_cache_ = false;
};

// log(softmax) over the class dimension, computed with max subtraction.
// Accepts [B x C] or [B x C x h x w] (per spatial position), so a converted
// fully-convolutional model keeps its terminal layer.
template <typename T>
class LogSoftmax : public Layer<T> {
 public:
  const char* kind() const override { return "logsoftmax"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<LogSoftmax<T>>(*this);
  }

 private:
  Tensor<T> output_;
  bool have_cache_ = false;
};

// [B x C x H x W] -> [B x C*H*W]
template <typename T>
class Flatten : public Layer<T> {
 public:
  const char* kind() const override { return "flatten"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Flatten<T>>(*this);
  }

 private:
  std::vector<size_t> in_shape_;
  bool have_cache_ = false;
};

}  // namespace wsnn::nn
