#pragma once

#include <string>
#include <vector>

#include "wsnn/tensor.hpp"

namespace wsnn::data {

// An in-memory labeled image set. Pixel values live in [0,1]. For datasets
// synthesized by placement (translated canvases), offsets records where each
// digit's 32x32 padded box landed; it is empty for plain loads.
struct LabeledDataset {
  struct Placement {
    int64_t dx = 0, dy = 0;  // top-left corner of the padded digit
  };

  Tensor<float> images;  // [N x 1 x H x W]
  Tensor<int64_t> labels;  // [N]
  std::vector<Placement> offsets;

  size_t size() const { return labels.rank() == 0 ? 0 : labels.dim(0); }
  size_t height() const { return images.dim(2); }
  size_t width() const { return images.dim(3); }
};

// Reads the canonical big-endian IDX pair: image magic 0x00000803 with dims
// (N, H, W) and unsigned byte pixels (scaled by 1/255), label magic
// 0x00000801 with N bytes. Bad magic, short files, and diverging counts each
// raise their own error type.
LabeledDataset load_mnist_idx(const std::string& images_path,
                              const std::string& labels_path);

}  // namespace wsnn::data
