#include "wsnn/harness/models.hpp"

#include "wsnn/errors.hpp"
#include "wsnn/nn/fcn.hpp"
#include "wsnn/nn/layers.hpp"
#include "wsnn/stn.hpp"
#include "wsnn/wsl.hpp"

namespace wsnn::harness {

namespace {

using nn::Act;
using nn::Activation;
using nn::Conv2d;
using nn::Flatten;
using nn::Linear;
using nn::LogSoftmax;
using nn::MaxPool2d;
using nn::Sequential;

constexpr size_t kClasses = 10;

// Side after a valid-padding 5x5 conv.
size_t conv5(size_t side, const char* what) {
  if (side < 5)
    throw ConfigError(std::string(what) + ": input side " +
                      std::to_string(side) + " too small for a 5x5 conv");
  return side - 4;
}

// Side after a non-overlapping 2x2 max pool.
size_t pool2(size_t side, const char* what) {
  if (side % 2 != 0)
    throw ConfigError(std::string(what) + ": side " + std::to_string(side) +
                      " not divisible by 2 at a pooling stage");
  return side / 2;
}

}  // namespace

size_t model_input_side(const Config& cfg) {
  const int64_t resize = cfg.integer("resize");
  if (resize < 0) throw ConfigError("resize must be >= 0");
  if (resize > 0) return static_cast<size_t>(resize);
  const int64_t canvas = cfg.integer("canvas");
  if (canvas < 1) throw ConfigError("canvas must be >= 1");
  return static_cast<size_t>(canvas);
}

std::unique_ptr<Sequential<float>> build_lenet(size_t side) {
  size_t s = conv5(side, "lenet32");
  s = pool2(s, "lenet32");
  s = conv5(s, "lenet32");
  s = pool2(s, "lenet32");
  const size_t fc_in = 50 * s * s;

  auto m = std::make_unique<Sequential<float>>();
  m->add(std::make_unique<Conv2d<float>>(1, 20, 5, 5), "conv1");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu1");
  m->add(std::make_unique<MaxPool2d<float>>(2), "pool1");
  m->add(std::make_unique<Conv2d<float>>(20, 50, 5, 5), "conv2");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu2");
  m->add(std::make_unique<MaxPool2d<float>>(2), "pool2");
  m->add(std::make_unique<Flatten<float>>(), "flatten");
  m->add(std::make_unique<Linear<float>>(fc_in, 500), "fc1");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu3");
  m->add(std::make_unique<Linear<float>>(500, kClasses), "fc2");
  m->add(std::make_unique<LogSoftmax<float>>(), "logsoftmax");
  return m;
}

namespace {

std::unique_ptr<Sequential<float>> build_mlp(size_t side) {
  auto m = std::make_unique<Sequential<float>>();
  m->add(std::make_unique<Flatten<float>>(), "flatten");
  m->add(std::make_unique<Linear<float>>(side * side, 128), "fc1");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu1");
  m->add(std::make_unique<Linear<float>>(128, 128), "fc2");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu2");
  m->add(std::make_unique<Linear<float>>(128, kClasses), "fc3");
  m->add(std::make_unique<LogSoftmax<float>>(), "logsoftmax");
  return m;
}

std::unique_ptr<Sequential<float>> build_convnet100(size_t side) {
  size_t s = pool2(conv5(side, "convnet100"), "convnet100");
  s = pool2(conv5(s, "convnet100"), "convnet100");
  s = pool2(conv5(s, "convnet100"), "convnet100");
  const size_t fc_in = 50 * s * s;

  auto m = std::make_unique<Sequential<float>>();
  m->add(std::make_unique<Conv2d<float>>(1, 20, 5, 5), "conv1");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu1");
  m->add(std::make_unique<MaxPool2d<float>>(2), "pool1");
  m->add(std::make_unique<Conv2d<float>>(20, 50, 5, 5), "conv2");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu2");
  m->add(std::make_unique<MaxPool2d<float>>(2), "pool2");
  m->add(std::make_unique<Conv2d<float>>(50, 50, 5, 5), "conv3");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu3");
  m->add(std::make_unique<MaxPool2d<float>>(2), "pool3");
  m->add(std::make_unique<Flatten<float>>(), "flatten");
  m->add(std::make_unique<Linear<float>>(fc_in, 500), "fc1");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu4");
  m->add(std::make_unique<Linear<float>>(500, kClasses), "fc2");
  m->add(std::make_unique<LogSoftmax<float>>(), "logsoftmax");
  return m;
}

std::unique_ptr<Sequential<float>> build_stn(const Config& cfg) {
  const stn::Mode mode = stn::parse_mode(cfg.str("stn_mode"));
  const int64_t out = cfg.integer("stn_out");
  if (out < 8) throw ConfigError("stn_out must be >= 8");
  const size_t canvas = static_cast<size_t>(cfg.integer("canvas"));

  const std::string loc_input = cfg.str("stn_localizer_input");
  size_t loc_h = 0;
  size_t loc_w = 0;
  if (loc_input == "downsampled") {
    loc_h = loc_w = static_cast<size_t>(out);
  } else if (loc_input != "full") {
    throw ConfigError("stn_localizer_input must be downsampled or full, got: " +
                      loc_input);
  }

  const size_t loc_side = loc_h != 0 ? loc_h : canvas;
  auto localizer = build_localizer(loc_side, stn::mode_params(mode));
  auto transformer = std::make_unique<stn::SpatialTransformer<float>>(
      std::move(localizer), mode, static_cast<size_t>(out),
      static_cast<size_t>(out), loc_h, loc_w,
      static_cast<float>(cfg.number("stn_fixed_scale")));

  auto m = std::make_unique<Sequential<float>>();
  m->add(std::move(transformer), "stn");
  m->add(build_lenet(static_cast<size_t>(out)), "classifier");
  return m;
}

}  // namespace

std::unique_ptr<Sequential<float>> build_localizer(size_t in_side,
                                                   size_t n_params) {
  size_t s = pool2(in_side, "localizer");
  s = conv5(s, "localizer");
  s = pool2(s, "localizer");
  s = conv5(s, "localizer");
  const size_t fc_in = 20 * s * s;

  auto m = std::make_unique<Sequential<float>>();
  m->add(std::make_unique<MaxPool2d<float>>(2), "pool1");
  m->add(std::make_unique<Conv2d<float>>(1, 20, 5, 5), "conv1");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu1");
  m->add(std::make_unique<MaxPool2d<float>>(2), "pool2");
  m->add(std::make_unique<Conv2d<float>>(20, 20, 5, 5), "conv2");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu2");
  m->add(std::make_unique<Flatten<float>>(), "flatten");
  m->add(std::make_unique<Linear<float>>(fc_in, 20), "fc1");
  m->add(std::make_unique<Activation<float>>(Act::relu), "relu3");
  m->add(std::make_unique<Linear<float>>(20, n_params), "fc2");
  return m;
}

std::unique_ptr<Sequential<float>> milfcn_from_lenet(
    const Sequential<float>& lenet) {
  auto m = std::make_unique<Sequential<float>>(
      nn::fully_convolutionalize(lenet, 5, 5));
  m->add(std::make_unique<wsl::MilMaxPool<float>>(), "mil");
  m->add(std::make_unique<LogSoftmax<float>>(), "logsoftmax_out");
  return m;
}

std::unique_ptr<Sequential<float>> build_model(const Config& cfg) {
  const std::string name = cfg.str("model");
  const size_t side = model_input_side(cfg);
  if (name == "lenet32") return build_lenet(side);
  if (name == "mlp32") return build_mlp(side);
  if (name == "convnet100") return build_convnet100(side);
  if (name == "mil_fcn") {
    // The score map must stay spatial: the trunk sees the full canvas.
    return milfcn_from_lenet(*build_lenet(32));
  }
  if (name == "stn") return build_stn(cfg);
  throw ConfigError("unknown model: " + name);
}

}  // namespace wsnn::harness
