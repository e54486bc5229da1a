#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wsnn/rng.hpp"
#include "wsnn/tensor.hpp"

namespace wsnn::nn {

enum class InitScheme {
  paper_literal,  // weights ~ N(0, (1/n_inputs)^2)
  fan_in_sqrt,    // weights ~ N(0, (1/sqrt(n_inputs))^2)
};

// A learnable tensor and its gradient, exposed by name ("weight", "bias",
// "gamma", ...). Pointers stay valid for the lifetime of the owning layer.
template <typename T>
struct Param {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

// Non-learnable persistent state (e.g. batchnorm running statistics):
// serialized with checkpoints but never touched by the optimizer.
template <typename T>
struct NamedState {
  std::string name;
  Tensor<T>* tensor;
};

// Differentiable unit. forward caches whatever backward needs, so backward is
// only valid after a forward on the same instance (and consumes that cache).
// One instance is single-threaded across a forward/backward pair.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  // grad_out is dL/d(output); returns dL/d(input) and accumulates parameter
  // gradients into the tensors exposed by params().
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual std::vector<Param<T>> params() { return {}; }
  virtual std::vector<NamedState<T>> state() { return {}; }

  // Gaussian weight init / zero bias per the scheme; layers without
  // parameters ignore it.
  virtual void init_params(InitScheme scheme, Rng& rng) {
    (void)scheme;
    (void)rng;
  }

  virtual std::unique_ptr<Layer<T>> clone() const = 0;

  // Hands stochastic layers (dropout) their run RNG stream.
  virtual void seed_runtime(uint64_t seed) { (void)seed; }

  virtual void set_train(bool train) { train_ = train; }
  bool is_train() const { return train_; }

  void zero_grad() {
    for (auto& p : params()) p.grad->zero();
  }

 protected:
  bool train_ = true;
};

// Ordered composition of layers. Each child gets a unique label (defaulting
// to its index) used to qualify parameter names, e.g. "conv1.weight".
template <typename T>
class Sequential : public Layer<T> {
 public:
  const char* kind() const override { return "sequential"; }

  Sequential& add(std::unique_ptr<Layer<T>> layer, std::string label = "") {
    if (label.empty()) label = std::to_string(entries_.size());
    for (const auto& e : entries_) {
      if (e.label == label) {
        throw ConfigError("sequential: duplicate layer label '" + label + "'");
      }
    }
    entries_.push_back(Entry{std::move(label), std::move(layer)});
    return *this;
  }

  size_t size() const { return entries_.size(); }
  Layer<T>& layer(size_t i) { return *entries_.at(i).layer; }
  const Layer<T>& layer(size_t i) const { return *entries_.at(i).layer; }
  const std::string& label(size_t i) const { return entries_.at(i).label; }

  // Index of the layer with the given label, or npos.
  static constexpr size_t npos = static_cast<size_t>(-1);
  size_t find(const std::string& label) const {
    for (size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].label == label) return i;
    }
    return npos;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> cur = x;
    for (auto& e : entries_) cur = e.layer->forward(cur);
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> cur = grad_out;
    for (size_t i = entries_.size(); i-- > 0;) {
      cur = entries_[i].layer->backward(cur);
    }
    return cur;
  }

  std::vector<Param<T>> params() override {
    std::vector<Param<T>> all;
    for (auto& e : entries_) {
      for (auto& p : e.layer->params()) {
        all.push_back(Param<T>{e.label + "." + p.name, p.value, p.grad});
      }
    }
    return all;
  }

  std::vector<NamedState<T>> state() override {
    std::vector<NamedState<T>> all;
    for (auto& e : entries_) {
      for (auto& s : e.layer->state()) {
        all.push_back(NamedState<T>{e.label + "." + s.name, s.tensor});
      }
    }
    return all;
  }

  void init_params(InitScheme scheme, Rng& rng) override {
    for (auto& e : entries_) e.layer->init_params(scheme, rng);
  }

  void seed_runtime(uint64_t seed) override {
    for (size_t i = 0; i < entries_.size(); ++i) {
      uint64_t salt = seed;
      entries_[i].layer->seed_runtime(Rng::splitmix64(salt) ^ (i + 1));
    }
  }

  void set_train(bool train) override {
    this->train_ = train;
    for (auto& e : entries_) e.layer->set_train(train);
  }

  std::unique_ptr<Layer<T>> clone() const override {
    auto copy = std::make_unique<Sequential<T>>();
    for (const auto& e : entries_) copy->add(e.layer->clone(), e.label);
    return copy;
  }

 private:
  struct Entry {
    std::string label;
    std::unique_ptr<Layer<T>> layer;
  };
  std::vector<Entry> entries_;
};

// Free-function spelling of parameter initialization.
template <typename T>
void init_params(Layer<T>& layer, InitScheme scheme, Rng& rng) {
  layer.init_params(scheme, rng);
}

}  // namespace wsnn::nn
