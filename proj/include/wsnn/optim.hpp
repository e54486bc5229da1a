#pragma once

#include <string>
#include <vector>

#include "wsnn/nn/layer.hpp"

namespace wsnn::optim {

// One learnable tensor plus its update state. lr_multiplier scales the
// effective learning rate per group (1.0 normal, 0.1 for fine-tuned
// pretrained layers, 0 freezes the group entirely -- a frozen group is
// bit-unchanged by steps). weight_decay enters the update as the gradient
// term 2*wd*theta (the differentiated sum-of-squares penalty).
template <typename T>
struct ParamGroup {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
  T lr_multiplier = T(1);
  T weight_decay = T(0);
  // Optimizer state, allocated on first use to match the param shape.
  Tensor<T> velocity;  // SGD momentum buffer
  Tensor<T> m, v;      // Adam moments
};

// Learning-rate schedule lambda_t = base_lr / (1 + lr_decay * t), where t
// counts mini-batch updates (starts at 0, incremented once per step call).
struct Schedule {
  double base_lr = 3e-4;
  double lr_decay = 0.0;
  double momentum = 0.0;
  bool nesterov = false;
  uint64_t t = 0;

  double current_lr() const {
    return base_lr / (1.0 + lr_decay * static_cast<double>(t));
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// theta -= lr * (g + mu*v) with v <- mu*v + g (nesterov), or -= lr * v
// otherwise, where g = grad + 2*wd*theta. Increments schedule.t.
template <typename T>
void sgd_step(std::vector<ParamGroup<T>>& groups, Schedule& schedule);

// Bias-corrected Adam; weight decay is added to the gradient before the
// moment updates. Increments schedule.t.
template <typename T>
void adam_step(std::vector<ParamGroup<T>>& groups, Schedule& schedule,
               const AdamConfig& cfg = {});

// One group per parameter tensor of the layer, multiplier 1, no decay.
template <typename T>
std::vector<ParamGroup<T>> make_groups(nn::Layer<T>& model);

// Fine-tuning wiring: layers named in reset_layers (Sequential labels) are
// re-initialized and train at full rate; every other group keeps its
// pretrained weights and gets the reduced multiplier.
template <typename T>
std::vector<ParamGroup<T>> make_finetune_groups(
    nn::Sequential<T>& model, const std::vector<std::string>& reset_layers,
    T pretrained_multiplier, nn::InitScheme scheme, Rng& rng);

// Applies one decay constant to every group.
template <typename T>
void set_weight_decay(std::vector<ParamGroup<T>>& groups, T wd) {
  for (auto& g : groups) g.weight_decay = wd;
}

}  // namespace wsnn::optim
