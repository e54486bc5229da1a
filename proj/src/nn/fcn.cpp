#include "wsnn/nn/fcn.hpp"

#include <algorithm>

namespace wsnn::nn {

namespace {

// Copies a linear layer's parameters into an equivalent convolution. The
// linear weight row for output o is indexed (c, y, x) row-major over the
// flattened input, which is exactly the row-major layout of a conv kernel
// [o][c][y][x] -- so this is a pure reinterpretation.
template <typename T>
std::unique_ptr<Conv2d<T>> linear_as_conv(Linear<T>& lin, size_t channels,
                                          size_t kh, size_t kw) {
  auto conv = std::make_unique<Conv2d<T>>(channels, lin.out_features(), kh, kw);
  const Tensor<T>& w = lin.weight();
  std::copy(w.data(), w.data() + w.size(), conv->weight().data());
  const Tensor<T>& b = lin.bias();
  std::copy(b.data(), b.data() + b.size(), conv->bias().data());
  return conv;
}

}  // namespace

template <typename T>
Sequential<T> fully_convolutionalize(const Sequential<T>& model, size_t fc_h,
                                     size_t fc_w) {
  if (fc_h == 0 || fc_w == 0) {
    throw ShapeError("fully_convolutionalize: zero fc spatial size");
  }
  Sequential<T> out;
  bool seen_flatten = false;
  bool seen_first_linear = false;

  for (size_t i = 0; i < model.size(); ++i) {
    // params()/state() need non-const access; conversion only reads them.
    auto& src = const_cast<Layer<T>&>(model.layer(i));
    const std::string& label = model.label(i);

    if (!seen_flatten) {
      if (dynamic_cast<Flatten<T>*>(&src) != nullptr) {
        seen_flatten = true;  // dropped: the tensor stays 4D from here on
        continue;
      }
      out.add(src.clone(), label);
      continue;
    }

    if (auto* lin = dynamic_cast<Linear<T>*>(&src)) {
      if (!seen_first_linear) {
        const size_t spatial = fc_h * fc_w;
        if (lin->in_features() % spatial != 0) {
          throw ShapeError(
              "fully_convolutionalize: first linear width " +
              std::to_string(lin->in_features()) + " is not divisible by " +
              std::to_string(fc_h) + "x" + std::to_string(fc_w));
        }
        out.add(linear_as_conv(*lin, lin->in_features() / spatial, fc_h, fc_w),
                label);
        seen_first_linear = true;
      } else {
        out.add(linear_as_conv(*lin, lin->in_features(), 1, 1), label);
      }
      continue;
    }

    // Shape-agnostic layers survive the conversion unchanged (logsoftmax
    // operates per spatial position on 4D input).
    if (dynamic_cast<Activation<T>*>(&src) != nullptr ||
        dynamic_cast<Dropout<T>*>(&src) != nullptr ||
        dynamic_cast<LogSoftmax<T>*>(&src) != nullptr) {
      out.add(src.clone(), label);
      continue;
    }
    throw ShapeError(std::string("fully_convolutionalize: cannot convert a '") +
                     src.kind() + "' layer after the flatten");
  }

  if (!seen_flatten || !seen_first_linear) {
    throw ShapeError(
        "fully_convolutionalize: model does not end in flatten + linear");
  }
  return out;
}

template Sequential<float> fully_convolutionalize<float>(
    const Sequential<float>&, size_t, size_t);
template Sequential<double> fully_convolutionalize<double>(
    const Sequential<double>&, size_t, size_t);

}  // namespace wsnn::nn
