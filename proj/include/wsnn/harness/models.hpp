#pragma once

#include <memory>
#include <string>

#include "wsnn/harness/config.hpp"
#include "wsnn/nn/layer.hpp"

namespace wsnn::harness {

// Side length of the images the configured model consumes: `resize` when set,
// the canvas side otherwise.
size_t model_input_side(const Config& cfg);

// Reference classifiers, keyed by the `model` config value:
//   lenet32    conv(1->20,5)-relu-pool2-conv(20->50,5)-relu-pool2-
//              flatten-linear(->500)-relu-linear(500->10)-logsoftmax
//   mlp32      flatten-linear(->128)-relu-linear(128->128)-relu-
//              linear(128->10)-logsoftmax
//   convnet100 lenet32 pattern with a third conv(50->50,5)-relu-pool2 stage
//   mil_fcn    lenet32 made fully convolutional (fc seen as 5x5 conv),
//              then global spatial max per class and a final logsoftmax
//   stn        spatial transformer (localizer watches a downsampled or full
//              view) followed by lenet32 on the transformed patch
// Construction is deterministic; call init_params afterwards to set weights.
std::unique_ptr<nn::Sequential<float>> build_model(const Config& cfg);

// lenet32 trunk for a given input side (the fc width adapts to geometry).
std::unique_ptr<nn::Sequential<float>> build_lenet(size_t side);

// Transform-parameter regressor:
// pool2-conv(1->20,5)-relu-pool2-conv(20->20,5)-relu-flatten-
// linear(->20)-relu-linear(20->n_params).
std::unique_ptr<nn::Sequential<float>> build_localizer(size_t in_side,
                                                       size_t n_params);

// The fine-tuning composition: an already-trained lenet32 becomes mil_fcn
// (weights carried over through the fully-convolutional rewrite).
std::unique_ptr<nn::Sequential<float>> milfcn_from_lenet(
    const nn::Sequential<float>& lenet);

}  // namespace wsnn::harness
