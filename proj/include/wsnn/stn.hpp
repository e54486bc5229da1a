#pragma once

#include "wsnn/nn/layers.hpp"

namespace wsnn::stn {

// How many degrees of freedom the localizer regresses and how they expand
// into a 2x3 affine matrix:
//   p2: (t_x, t_y) with isotropic scale fixed by the caller
//   p3: (s, t_x, t_y)
//   p4: (s, r, t_x, t_y) -> rotation by r scaled by s
//   p6: the raw 2x3 matrix, row-major
enum class Mode { p2, p3, p4, p6 };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& name);  // "2p"/"3p"/"4p"/"6p"
size_t mode_params(Mode m);

// raw [B x P] -> A [B x 2 x 3]:
//   p2: [[fs, 0, t_x], [0, fs, t_y]]
//   p3: [[s, 0, t_x], [0, s, t_y]]
//   p4: [[s cos r, -s sin r, t_x], [s sin r, s cos r, t_y]]
//   p6: raw reshaped row-major
template <typename T>
Tensor<T> expand_params(const Tensor<T>& raw, Mode mode, T fixed_scale = T(1));

// Chain rule back from matrix gradients to raw-parameter gradients.
template <typename T>
Tensor<T> expand_params_backward(const Tensor<T>& raw, Mode mode,
                                 const Tensor<T>& grad_matrix);

// Maps the regular normalized target grid through each item's affine matrix,
// producing source coordinates grid[b][y][x] = (x_s, y_s). Coordinates are
// normalized to [-1, 1] with the align-corners convention: -1 and +1 are the
// centers of the boundary pixels (a size-1 axis uses coordinate 0).
template <typename T>
Tensor<T> affine_grid(const Tensor<T>& A, size_t out_h, size_t out_w);

// dL/dA from dL/dgrid (the target grid is a constant).
template <typename T>
Tensor<T> affine_grid_backward(const Tensor<T>& grad_grid);

// Bilinear kernel: each output position reads the <=4 input pixels around
// its source coordinate, weighted (1-|dx|)(1-|dy|); taps outside the image
// contribute zero, so coordinates beyond [-1,1] fade to black.
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& input, const Tensor<T>& grid);

template <typename T>
struct BilinearGrads {
  Tensor<T> dinput;  // like input
  Tensor<T> dgrid;   // like grid
};

template <typename T>
BilinearGrads<T> bilinear_sample_backward(const Tensor<T>& input,
                                          const Tensor<T>& grid,
                                          const Tensor<T>& grad_out);

// Bilinear resize as sampling with the identity grid. Differentiable via
// downsample_backward (the grid is fixed, so only the image gradient flows).
template <typename T>
Tensor<T> downsample(const Tensor<T>& x, size_t out_h, size_t out_w);

template <typename T>
Tensor<T> downsample_backward(const Tensor<T>& x, size_t out_h, size_t out_w,
                              const Tensor<T>& grad_out);

// The full differentiable attention module: a localizer network regresses
// transform parameters from the input (optionally a bilinear-downsampled
// copy, so a small localizer can watch a big image), the parameters expand
// to an affine matrix, and the FULL-resolution input is resampled through
// the resulting grid. Gradients flow both through the sampled pixels and
// through the grid into the localizer.
//
// init_params initializes the localizer, then points it at the identity
// transform: the last linear layer gets zero weights and the identity
// parameter vector as bias, so training starts from "no transform".
template <typename T>
class SpatialTransformer : public nn::Layer<T> {
 public:
  // loc_h/loc_w = 0 feeds the localizer the full-resolution input.
  SpatialTransformer(std::unique_ptr<nn::Sequential<T>> localizer, Mode mode,
                     size_t out_h, size_t out_w, size_t loc_h = 0,
                     size_t loc_w = 0, T fixed_scale = T(1));
  SpatialTransformer(const SpatialTransformer& other);

  const char* kind() const override { return "spatial_transformer"; }
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<nn::Param<T>> params() override;
  std::vector<nn::NamedState<T>> state() override;
  void init_params(nn::InitScheme scheme, Rng& rng) override;
  void seed_runtime(uint64_t seed) override;
  void set_train(bool train) override;
  std::unique_ptr<nn::Layer<T>> clone() const override {
    return std::make_unique<SpatialTransformer<T>>(*this);
  }

  nn::Sequential<T>& localizer() { return *localizer_; }
  Mode mode() const { return mode_; }

 private:
  std::unique_ptr<nn::Sequential<T>> localizer_;
  Mode mode_;
  size_t out_h_, out_w_;
  size_t loc_h_, loc_w_;  // 0,0 = full input
  T fixed_scale_;
  // forward caches
  Tensor<T> input_, raw_, grid_;
  bool have_cache_ = false;
};

// The identity parameter vector for a mode (what the localizer's final bias
// is set to): p2 (0,0); p3 (1,0,0); p4 (1,0,0,0); p6 (1,0,0,0,1,0).
template <typename T>
Tensor<T> identity_params(Mode mode);

}  // namespace wsnn::stn
