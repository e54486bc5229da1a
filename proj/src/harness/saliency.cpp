#include "wsnn/harness/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

#include "wsnn/errors.hpp"

namespace wsnn::harness {

namespace {

// Clone of `m` without its final log-softmax; a trailing nested Sequential
// (e.g. the classifier behind a spatial transformer) is stripped recursively.
std::unique_ptr<nn::Sequential<float>> strip_trailing_logsoftmax(
    const nn::Sequential<float>& m) {
  auto copy = std::make_unique<nn::Sequential<float>>();
  for (size_t i = 0; i < m.size(); ++i) {
    const nn::Layer<float>& layer = m.layer(i);
    if (i + 1 == m.size()) {
      if (std::strcmp(layer.kind(), "logsoftmax") == 0) break;
      if (const auto* seq =
              dynamic_cast<const nn::Sequential<float>*>(&layer)) {
        copy->add(strip_trailing_logsoftmax(*seq), m.label(i));
        break;
      }
    }
    copy->add(layer.clone(), m.label(i));
  }
  return copy;
}

}  // namespace

Tensor<float> saliency_map(const nn::Sequential<float>& model,
                           const Tensor<float>& image, size_t class_index) {
  if (image.rank() != 4 || image.dim(0) != 1)
    throw ShapeError("saliency_map: expected a single image [1 x C x H x W]");
  auto scorer = strip_trailing_logsoftmax(model);
  scorer->set_train(false);

  const Tensor<float> scores = scorer->forward(image);
  if (scores.rank() != 2 || scores.dim(0) != 1)
    throw ShapeError("saliency_map: model scores are not [1 x C]");
  if (class_index >= scores.dim(1))
    throw Error("saliency_map: class index " + std::to_string(class_index) +
                " out of range for " + std::to_string(scores.dim(1)) +
                " classes");

  Tensor<float> seed({1, scores.dim(1)});
  seed.data()[class_index] = 1.0f;
  const Tensor<float> dinput = scorer->backward(seed);

  const size_t channels = image.dim(1), h = image.dim(2), w = image.dim(3);
  Tensor<float> map({h, w});
  for (size_t c = 0; c < channels; ++c) {
    const float* plane = dinput.data() + c * h * w;
    for (size_t i = 0; i < h * w; ++i)
      map.data()[i] = std::max(map.data()[i], std::abs(plane[i]));
  }

  float lo = map.data()[0], hi = map.data()[0];
  for (size_t i = 1; i < h * w; ++i) {
    lo = std::min(lo, map.data()[i]);
    hi = std::max(hi, map.data()[i]);
  }
  if (hi - lo <= 0.0f) {
    map.zero();  // constant gradient: nothing to highlight
    return map;
  }
  const float inv = 1.0f / (hi - lo);
  for (size_t i = 0; i < h * w; ++i) map.data()[i] = (map.data()[i] - lo) * inv;
  return map;
}

void write_pgm(const Tensor<float>& map, const std::string& path) {
  if (map.rank() != 2) throw ShapeError("write_pgm: expected [H x W]");
  const size_t h = map.dim(0), w = map.dim(1);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open PGM for writing: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::string bytes(h * w, '\0');
  for (size_t i = 0; i < h * w; ++i) {
    const float v = std::clamp(map.data()[i], 0.0f, 1.0f);
    bytes[i] = static_cast<char>(
        static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to PGM: " + path);
}

}  // namespace wsnn::harness
