#pragma once

#include "wsnn/nn/layer.hpp"

namespace wsnn::nn {

// Compares a layer's analytic gradients (params and input) against central
// finite differences of the scalar probe L = sum(forward(x) * R), where R is
// a fixed random projection. Returns the maximum relative error
// |ga-gn| / max(|ga|,|gn|), treating pairs that are both below 1e-10 as
// exactly equal. Stochastic layers must have their noise frozen by the
// caller first (e.g. Dropout::freeze_mask) so repeated forwards agree.
// Meant to run on double-precision layers.
template <typename T>
double gradient_check(Layer<T>& layer, const Tensor<T>& input,
                      double h = 1e-5);

}  // namespace wsnn::nn
