#include "wsnn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "wsnn/kernels/kernels.hpp"

namespace wsnn::optim {

namespace {

template <typename T>
void ensure_like(Tensor<T>& state, const Tensor<T>& param) {
  if (state.size() != param.size() || state.rank() == 0) {
    state = Tensor<T>(param.shape());
  }
}

}  // namespace

template <typename T>
void sgd_step(std::vector<ParamGroup<T>>& groups, Schedule& schedule) {
  const double lr = schedule.current_lr();
  for (auto& g : groups) {
    if (g.lr_multiplier == T(0)) continue;
    ensure_like(g.velocity, *g.value);
    kernels::SgdArgs<T> args;
    args.lr = static_cast<T>(lr) * g.lr_multiplier;
    args.momentum = static_cast<T>(schedule.momentum);
    args.wd2 = T(2) * g.weight_decay;
    args.nesterov = schedule.nesterov;
    kernels::sgd_step(g.value->size(), g.value->data(), g.grad->data(),
                      g.velocity.data(), args);
  }
  ++schedule.t;
}

template <typename T>
void adam_step(std::vector<ParamGroup<T>>& groups, Schedule& schedule,
               const AdamConfig& cfg) {
  const double lr = schedule.current_lr();
  const double t = static_cast<double>(schedule.t) + 1.0;  // 1-based for bias
  const double bias1 = 1.0 / (1.0 - std::pow(cfg.beta1, t));
  const double bias2 = 1.0 / (1.0 - std::pow(cfg.beta2, t));
  for (auto& g : groups) {
    if (g.lr_multiplier == T(0)) continue;
    ensure_like(g.m, *g.value);
    ensure_like(g.v, *g.value);
    kernels::AdamArgs<T> args;
    args.lr = static_cast<T>(lr) * g.lr_multiplier;
    args.beta1 = static_cast<T>(cfg.beta1);
    args.beta2 = static_cast<T>(cfg.beta2);
    args.eps = static_cast<T>(cfg.eps);
    args.bias1 = static_cast<T>(bias1);
    args.bias2 = static_cast<T>(bias2);
    args.wd2 = T(2) * g.weight_decay;
    kernels::adam_step(g.value->size(), g.value->data(), g.grad->data(),
                       g.m.data(), g.v.data(), args);
  }
  ++schedule.t;
}

template <typename T>
std::vector<ParamGroup<T>> make_groups(nn::Layer<T>& model) {
  std::vector<ParamGroup<T>> groups;
  for (auto& p : model.params()) {
    ParamGroup<T> g;
    g.name = p.name;
    g.value = p.value;
    g.grad = p.grad;
    groups.push_back(std::move(g));
  }
  return groups;
}

template <typename T>
std::vector<ParamGroup<T>> make_finetune_groups(
    nn::Sequential<T>& model, const std::vector<std::string>& reset_layers,
    T pretrained_multiplier, nn::InitScheme scheme, Rng& rng) {
  for (const auto& name : reset_layers) {
    const size_t i = model.find(name);
    if (i == nn::Sequential<T>::npos) {
      throw ConfigError("finetune: no layer labeled '" + name + "'");
    }
    model.layer(i).init_params(scheme, rng);
  }
  auto groups = make_groups(model);
  for (auto& g : groups) {
    const size_t dot = g.name.rfind('.');
    const std::string label = g.name.substr(0, dot);
    const bool reset = std::find(reset_layers.begin(), reset_layers.end(),
                                 label) != reset_layers.end();
    g.lr_multiplier = reset ? T(1) : pretrained_multiplier;
  }
  return groups;
}

#define WSNN_INSTANTIATE_OPTIM(T)                                          \
  template void sgd_step<T>(std::vector<ParamGroup<T>>&, Schedule&);       \
  template void adam_step<T>(std::vector<ParamGroup<T>>&, Schedule&,       \
                             const AdamConfig&);                           \
  template std::vector<ParamGroup<T>> make_groups<T>(nn::Layer<T>&);       \
  template std::vector<ParamGroup<T>> make_finetune_groups<T>(             \
      nn::Sequential<T>&, const std::vector<std::string>&, T,              \
      nn::InitScheme, Rng&);

WSNN_INSTANTIATE_OPTIM(float)
WSNN_INSTANTIATE_OPTIM(double)

}  // namespace wsnn::optim
