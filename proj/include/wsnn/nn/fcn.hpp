#pragma once

#include "wsnn/nn/layers.hpp"

namespace wsnn::nn {

// Rewrites a classifier that ends in flatten + linear stack into an
// equivalent fully-convolutional network: the first linear becomes an
// fc_h x fc_w convolution (fc_h/fc_w being the spatial size that linear was
// trained to see), later linears become 1x1 convolutions, and everything
// else is cloned. Weights are reshaped, not transformed, so on an input of
// the original size the converted model reproduces the original output as a
// 1x1 score map; on larger inputs it slides the classifier across every
// valid position.
//
// Throws ShapeError if the model has no flatten + linear tail or the first
// linear's width is not divisible by fc_h*fc_w.
template <typename T>
Sequential<T> fully_convolutionalize(const Sequential<T>& model, size_t fc_h,
                                     size_t fc_w);

}  // namespace wsnn::nn
