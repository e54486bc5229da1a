#pragma once

#include <string>

#include "wsnn/nn/layer.hpp"

namespace wsnn::harness {

// Gradient saliency: |d score_class / d input| for one image [1 x C x H x W],
// max-reduced over channels and min-max normalized to [0,1]. A trailing
// log-softmax (also inside a nested trailing Sequential) is skipped so the
// derivative is of the class score itself, and an all-zero gradient yields an
// all-zero map rather than NaN. Runs the model in eval mode on a private
// clone, so the caller's instance keeps its caches.
Tensor<float> saliency_map(const nn::Sequential<float>& model,
                           const Tensor<float>& image, size_t class_index);

// Binary 8-bit PGM (P5); values are clamped to [0,1] and scaled to 0..255.
void write_pgm(const Tensor<float>& map, const std::string& path);

}  // namespace wsnn::harness
