#include "wsnn/nn/gradcheck.hpp"

#include <cmath>

namespace wsnn::nn {

namespace {

template <typename T>
double probe(Layer<T>& layer, const Tensor<T>& x, const Tensor<T>& r) {
  Tensor<T> y = layer.forward(x);
  double acc = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    acc += static_cast<double>(y(i)) * static_cast<double>(r(i));
  }
  return acc;
}

double rel_err(double ga, double gn) {
  const double scale = std::max(std::fabs(ga), std::fabs(gn));
  if (scale < 1e-10) return 0.0;
  return std::fabs(ga - gn) / scale;
}

}  // namespace

template <typename T>
double gradient_check(Layer<T>& layer, const Tensor<T>& input, double h) {
  // Fixed projection so the probe is a deterministic scalar function.
  Tensor<T> y0 = layer.forward(input);
  Rng proj_rng(0x9d2c5680u);
  Tensor<T> r(y0.shape());
  for (size_t i = 0; i < r.size(); ++i) {
    r(i) = static_cast<T>(proj_rng.normal());
  }

  // Analytic pass: dL/dout = R.
  layer.zero_grad();
  Tensor<T> din = layer.backward(r);
  std::vector<Tensor<T>> param_grads;
  for (auto& p : layer.params()) param_grads.push_back(*p.grad);

  double worst = 0.0;

  // Parameters: perturb in place, restore after.
  auto params = layer.params();
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& theta = *params[pi].value;
    const Tensor<T>& ga = param_grads[pi];
    for (size_t i = 0; i < theta.size(); ++i) {
      const T saved = theta(i);
      theta(i) = saved + static_cast<T>(h);
      const double lp = probe(layer, input, r);
      theta(i) = saved - static_cast<T>(h);
      const double lm = probe(layer, input, r);
      theta(i) = saved;
      worst = std::max(worst,
                       rel_err(static_cast<double>(ga(i)), (lp - lm) / (2 * h)));
    }
  }

  // Input.
  Tensor<T> x = input;
  for (size_t i = 0; i < x.size(); ++i) {
    const T saved = x(i);
    x(i) = saved + static_cast<T>(h);
    const double lp = probe(layer, x, r);
    x(i) = saved - static_cast<T>(h);
    const double lm = probe(layer, x, r);
    x(i) = saved;
    worst = std::max(worst,
                     rel_err(static_cast<double>(din(i)), (lp - lm) / (2 * h)));
  }
  return worst;
}

template double gradient_check<float>(Layer<float>&, const Tensor<float>&,
                                      double);
template double gradient_check<double>(Layer<double>&, const Tensor<double>&,
                                       double);

}  // namespace wsnn::nn
