#include "wsnn/stn.hpp"

#include <cmath>

namespace wsnn::stn {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::p2: return "2p";
    case Mode::p3: return "3p";
    case Mode::p4: return "4p";
    case Mode::p6: return "6p";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "2p") return Mode::p2;
  if (name == "3p") return Mode::p3;
  if (name == "4p") return Mode::p4;
  if (name == "6p") return Mode::p6;
  throw ConfigError("stn: unknown mode '" + name + "' (want 2p/3p/4p/6p)");
}

size_t mode_params(Mode m) {
  switch (m) {
    case Mode::p2: return 2;
    case Mode::p3: return 3;
    case Mode::p4: return 4;
    case Mode::p6: return 6;
  }
  return 0;
}

namespace {

template <typename T>
void require_raw(const Tensor<T>& raw, Mode mode) {
  if (raw.rank() != 2 || raw.dim(1) != mode_params(mode)) {
    throw ShapeError(std::string("stn: mode ") + mode_name(mode) + " wants [Bx" +
                     std::to_string(mode_params(mode)) + "] params, got " +
                     detail::shape_str(raw.shape()));
  }
}

// Normalized target coordinate of index i on an axis of n cells.
template <typename T>
T norm_coord(size_t i, size_t n) {
  if (n == 1) return T(0);
  return T(-1) + T(2) * static_cast<T>(i) / static_cast<T>(n - 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// parameter expansion
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> expand_params(const Tensor<T>& raw, Mode mode, T fixed_scale) {
  require_raw(raw, mode);
  const size_t B = raw.dim(0);
  Tensor<T> A({B, 2, 3});
  for (size_t b = 0; b < B; ++b) {
    const T* p = raw.data() + b * mode_params(mode);
    T* a = A.data() + b * 6;
    switch (mode) {
      case Mode::p2:
        a[0] = fixed_scale; a[1] = T(0);        a[2] = p[0];
        a[3] = T(0);        a[4] = fixed_scale; a[5] = p[1];
        break;
      case Mode::p3:
        a[0] = p[0]; a[1] = T(0); a[2] = p[1];
        a[3] = T(0); a[4] = p[0]; a[5] = p[2];
        break;
      case Mode::p4: {
        const T s = p[0], c = std::cos(p[1]), sn = std::sin(p[1]);
        a[0] = s * c;  a[1] = -s * sn; a[2] = p[2];
        a[3] = s * sn; a[4] = s * c;   a[5] = p[3];
        break;
      }
      case Mode::p6:
        for (int i = 0; i < 6; ++i) a[i] = p[i];
        break;
    }
  }
  return A;
}

template <typename T>
Tensor<T> expand_params_backward(const Tensor<T>& raw, Mode mode,
                                 const Tensor<T>& grad_matrix) {
  require_raw(raw, mode);
  const size_t B = raw.dim(0);
  if (grad_matrix.rank() != 3 || grad_matrix.dim(0) != B ||
      grad_matrix.dim(1) != 2 || grad_matrix.dim(2) != 3) {
    throw ShapeError("stn: bad matrix grad shape " +
                     detail::shape_str(grad_matrix.shape()));
  }
  Tensor<T> draw(raw.shape());
  for (size_t b = 0; b < B; ++b) {
    const T* p = raw.data() + b * mode_params(mode);
    const T* da = grad_matrix.data() + b * 6;
    T* d = draw.data() + b * mode_params(mode);
    switch (mode) {
      case Mode::p2:
        d[0] = da[2];
        d[1] = da[5];
        break;
      case Mode::p3:
        d[0] = da[0] + da[4];
        d[1] = da[2];
        d[2] = da[5];
        break;
      case Mode::p4: {
        const T s = p[0], c = std::cos(p[1]), sn = std::sin(p[1]);
        d[0] = c * da[0] - sn * da[1] + sn * da[3] + c * da[4];
        d[1] = s * (-sn * da[0] - c * da[1] + c * da[3] - sn * da[4]);
        d[2] = da[2];
        d[3] = da[5];
        break;
      }
      case Mode::p6:
        for (int i = 0; i < 6; ++i) d[i] = da[i];
        break;
    }
  }
  return draw;
}

// ---------------------------------------------------------------------------
// grid generation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> affine_grid(const Tensor<T>& A, size_t out_h, size_t out_w) {
  if (A.rank() != 3 || A.dim(1) != 2 || A.dim(2) != 3) {
    throw ShapeError("stn: expected [Bx2x3] matrices, got " +
                     detail::shape_str(A.shape()));
  }
  if (out_h == 0 || out_w == 0) {
    throw ShapeError("stn: zero grid size");
  }
  const size_t B = A.dim(0);
  Tensor<T> grid({B, out_h, out_w, 2});
  for (size_t b = 0; b < B; ++b) {
    const T* a = A.data() + b * 6;
    T* g = grid.data() + b * out_h * out_w * 2;
    for (size_t i = 0; i < out_h; ++i) {
      const T yt = norm_coord<T>(i, out_h);
      for (size_t j = 0; j < out_w; ++j) {
        const T xt = norm_coord<T>(j, out_w);
        *g++ = a[0] * xt + a[1] * yt + a[2];  // x_s
        *g++ = a[3] * xt + a[4] * yt + a[5];  // y_s
      }
    }
  }
  return grid;
}

template <typename T>
Tensor<T> affine_grid_backward(const Tensor<T>& grad_grid) {
  if (grad_grid.rank() != 4 || grad_grid.dim(3) != 2) {
    throw ShapeError("stn: bad grid grad shape " +
                     detail::shape_str(grad_grid.shape()));
  }
  const size_t B = grad_grid.dim(0);
  const size_t out_h = grad_grid.dim(1), out_w = grad_grid.dim(2);
  Tensor<T> dA({B, 2, 3});
  for (size_t b = 0; b < B; ++b) {
    const T* g = grad_grid.data() + b * out_h * out_w * 2;
    T* da = dA.data() + b * 6;
    for (size_t i = 0; i < out_h; ++i) {
      const T yt = norm_coord<T>(i, out_h);
      for (size_t j = 0; j < out_w; ++j) {
        const T xt = norm_coord<T>(j, out_w);
        const T dxs = *g++;
        const T dys = *g++;
        da[0] += dxs * xt;
        da[1] += dxs * yt;
        da[2] += dxs;
        da[3] += dys * xt;
        da[4] += dys * yt;
        da[5] += dys;
      }
    }
  }
  return dA;
}

// ---------------------------------------------------------------------------
// bilinear sampling
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void require_sample_shapes(const Tensor<T>& input, const Tensor<T>& grid) {
  if (input.rank() != 4) {
    throw ShapeError("stn: expected [BxCxHxW] input, got " +
                     detail::shape_str(input.shape()));
  }
  if (grid.rank() != 4 || grid.dim(3) != 2 || grid.dim(0) != input.dim(0)) {
    throw ShapeError("stn: grid " + detail::shape_str(grid.shape()) +
                     " does not match input " +
                     detail::shape_str(input.shape()));
  }
}

// The four taps around one source coordinate and their weights.
template <typename T>
struct Taps {
  long long x0, y0;  // top-left tap; x0+1/y0+1 are the others
  T wx0, wx1, wy0, wy1;
  T px_dxs, py_dys;  // d(pixel coord)/d(normalized coord)
};

template <typename T>
Taps<T> make_taps(T xs, T ys, size_t H, size_t W) {
  Taps<T> t;
  t.px_dxs = static_cast<T>(W - 1) / T(2);
  t.py_dys = static_cast<T>(H - 1) / T(2);
  const T px = (xs + T(1)) * t.px_dxs;
  const T py = (ys + T(1)) * t.py_dys;
  const T fx = std::floor(px), fy = std::floor(py);
  t.x0 = static_cast<long long>(fx);
  t.y0 = static_cast<long long>(fy);
  t.wx1 = px - fx;
  t.wx0 = T(1) - t.wx1;
  t.wy1 = py - fy;
  t.wy0 = T(1) - t.wy1;
  return t;
}

template <typename T>
T tap_value(const T* plane, size_t H, size_t W, long long y, long long x) {
  if (y < 0 || y >= static_cast<long long>(H) || x < 0 ||
      x >= static_cast<long long>(W)) {
    return T(0);
  }
  return plane[static_cast<size_t>(y) * W + static_cast<size_t>(x)];
}

}  // namespace

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& input, const Tensor<T>& grid) {
  require_sample_shapes(input, grid);
  const size_t B = input.dim(0), C = input.dim(1);
  const size_t H = input.dim(2), W = input.dim(3);
  const size_t out_h = grid.dim(1), out_w = grid.dim(2);
  Tensor<T> out({B, C, out_h, out_w});
  for (size_t b = 0; b < B; ++b) {
    const T* g = grid.data() + b * out_h * out_w * 2;
    for (size_t pos = 0; pos < out_h * out_w; ++pos) {
      const auto t = make_taps(g[pos * 2], g[pos * 2 + 1], H, W);
      for (size_t c = 0; c < C; ++c) {
        const T* plane = input.data() + (b * C + c) * H * W;
        const T v00 = tap_value(plane, H, W, t.y0, t.x0);
        const T v01 = tap_value(plane, H, W, t.y0, t.x0 + 1);
        const T v10 = tap_value(plane, H, W, t.y0 + 1, t.x0);
        const T v11 = tap_value(plane, H, W, t.y0 + 1, t.x0 + 1);
        out((b * C + c) * out_h * out_w + pos) =
            t.wy0 * (t.wx0 * v00 + t.wx1 * v01) +
            t.wy1 * (t.wx0 * v10 + t.wx1 * v11);
      }
    }
  }
  return out;
}

template <typename T>
BilinearGrads<T> bilinear_sample_backward(const Tensor<T>& input,
                                          const Tensor<T>& grid,
                                          const Tensor<T>& grad_out) {
  require_sample_shapes(input, grid);
  const size_t B = input.dim(0), C = input.dim(1);
  const size_t H = input.dim(2), W = input.dim(3);
  const size_t out_h = grid.dim(1), out_w = grid.dim(2);
  if (grad_out.rank() != 4 || grad_out.dim(0) != B || grad_out.dim(1) != C ||
      grad_out.dim(2) != out_h || grad_out.dim(3) != out_w) {
    throw ShapeError("stn: bad sample grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  BilinearGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(grid.shape())};
  for (size_t b = 0; b < B; ++b) {
    const T* g = grid.data() + b * out_h * out_w * 2;
    T* dg = grads.dgrid.data() + b * out_h * out_w * 2;
    for (size_t pos = 0; pos < out_h * out_w; ++pos) {
      const auto t = make_taps(g[pos * 2], g[pos * 2 + 1], H, W);
      T dxs = T(0), dys = T(0);
      for (size_t c = 0; c < C; ++c) {
        const T* plane = input.data() + (b * C + c) * H * W;
        T* dplane = grads.dinput.data() + (b * C + c) * H * W;
        const T dy = grad_out((b * C + c) * out_h * out_w + pos);
        const T v00 = tap_value(plane, H, W, t.y0, t.x0);
        const T v01 = tap_value(plane, H, W, t.y0, t.x0 + 1);
        const T v10 = tap_value(plane, H, W, t.y0 + 1, t.x0);
        const T v11 = tap_value(plane, H, W, t.y0 + 1, t.x0 + 1);
        // image gradient: scatter the four weights
        const auto add_tap = [&](long long y, long long x, T w) {
          if (y >= 0 && y < static_cast<long long>(H) && x >= 0 &&
              x < static_cast<long long>(W)) {
            dplane[static_cast<size_t>(y) * W + static_cast<size_t>(x)] +=
                dy * w;
          }
        };
        add_tap(t.y0, t.x0, t.wy0 * t.wx0);
        add_tap(t.y0, t.x0 + 1, t.wy0 * t.wx1);
        add_tap(t.y0 + 1, t.x0, t.wy1 * t.wx0);
        add_tap(t.y0 + 1, t.x0 + 1, t.wy1 * t.wx1);
        // coordinate gradient via the kernel's partial derivatives
        dxs += dy * (t.wy0 * (v01 - v00) + t.wy1 * (v11 - v10));
        dys += dy * (t.wx0 * (v10 - v00) + t.wx1 * (v11 - v01));
      }
      dg[pos * 2] = dxs * t.px_dxs;
      dg[pos * 2 + 1] = dys * t.py_dys;
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// resize
// ---------------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> identity_grid(size_t B, size_t out_h, size_t out_w) {
  Tensor<T> grid({B, out_h, out_w, 2});
  for (size_t b = 0; b < B; ++b) {
    T* g = grid.data() + b * out_h * out_w * 2;
    for (size_t i = 0; i < out_h; ++i) {
      const T yt = norm_coord<T>(i, out_h);
      for (size_t j = 0; j < out_w; ++j) {
        *g++ = norm_coord<T>(j, out_w);
        *g++ = yt;
      }
    }
  }
  return grid;
}

}  // namespace

template <typename T>
Tensor<T> downsample(const Tensor<T>& x, size_t out_h, size_t out_w) {
  if (x.rank() != 4) {
    throw ShapeError("downsample: expected [BxCxHxW], got " +
                     detail::shape_str(x.shape()));
  }
  return bilinear_sample(x, identity_grid<T>(x.dim(0), out_h, out_w));
}

template <typename T>
Tensor<T> downsample_backward(const Tensor<T>& x, size_t out_h, size_t out_w,
                              const Tensor<T>& grad_out) {
  return bilinear_sample_backward(x, identity_grid<T>(x.dim(0), out_h, out_w),
                                  grad_out)
      .dinput;
}

// ---------------------------------------------------------------------------
// composite module
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> identity_params(Mode mode) {
  switch (mode) {
    case Mode::p2: return Tensor<T>::from({2}, {T(0), T(0)});
    case Mode::p3: return Tensor<T>::from({3}, {T(1), T(0), T(0)});
    case Mode::p4: return Tensor<T>::from({4}, {T(1), T(0), T(0), T(0)});
    case Mode::p6:
      return Tensor<T>::from({6}, {T(1), T(0), T(0), T(0), T(1), T(0)});
  }
  throw ConfigError("stn: bad mode");
}

template <typename T>
SpatialTransformer<T>::SpatialTransformer(
    std::unique_ptr<nn::Sequential<T>> localizer, Mode mode, size_t out_h,
    size_t out_w, size_t loc_h, size_t loc_w, T fixed_scale)
    : localizer_(std::move(localizer)),
      mode_(mode),
      out_h_(out_h),
      out_w_(out_w),
      loc_h_(loc_h),
      loc_w_(loc_w),
      fixed_scale_(fixed_scale) {
  if (!localizer_) {
    throw ConfigError("spatial_transformer: null localizer");
  }
  if ((loc_h_ == 0) != (loc_w_ == 0)) {
    throw ConfigError("spatial_transformer: localizer size must set both "
                      "dimensions or neither");
  }
}

template <typename T>
SpatialTransformer<T>::SpatialTransformer(const SpatialTransformer& other)
    : nn::Layer<T>(other),
      mode_(other.mode_),
      out_h_(other.out_h_),
      out_w_(other.out_w_),
      loc_h_(other.loc_h_),
      loc_w_(other.loc_w_),
      fixed_scale_(other.fixed_scale_),
      input_(other.input_),
      raw_(other.raw_),
      grid_(other.grid_),
      have_cache_(other.have_cache_) {
  auto cloned = other.localizer_->clone();
  localizer_.reset(static_cast<nn::Sequential<T>*>(cloned.release()));
}

template <typename T>
Tensor<T> SpatialTransformer<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 4) {
    throw ShapeError("spatial_transformer: expected [BxCxHxW], got " +
                     detail::shape_str(x.shape()));
  }
  const Tensor<T> loc_in =
      loc_h_ ? downsample(x, loc_h_, loc_w_) : x;
  raw_ = localizer_->forward(loc_in);
  require_raw(raw_, mode_);
  const Tensor<T> A = expand_params(raw_, mode_, fixed_scale_);
  grid_ = affine_grid(A, out_h_, out_w_);
  input_ = x;
  have_cache_ = true;
  return bilinear_sample(x, grid_);
}

template <typename T>
Tensor<T> SpatialTransformer<T>::backward(const Tensor<T>& grad_out) {
  if (!have_cache_) {
    throw Error("spatial_transformer: backward called without forward");
  }
  auto grads = bilinear_sample_backward(input_, grid_, grad_out);
  const Tensor<T> dA = affine_grid_backward(grads.dgrid);
  const Tensor<T> draw = expand_params_backward(raw_, mode_, dA);
  Tensor<T> dloc = localizer_->backward(draw);
  if (loc_h_) {
    dloc = downsample_backward(input_, loc_h_, loc_w_, dloc);
  }
  return add(grads.dinput, dloc);
}

template <typename T>
std::vector<nn::Param<T>> SpatialTransformer<T>::params() {
  std::vector<nn::Param<T>> all;
  for (auto& p : localizer_->params()) {
    all.push_back(nn::Param<T>{"localizer." + p.name, p.value, p.grad});
  }
  return all;
}

template <typename T>
std::vector<nn::NamedState<T>> SpatialTransformer<T>::state() {
  std::vector<nn::NamedState<T>> all;
  for (auto& s : localizer_->state()) {
    all.push_back(nn::NamedState<T>{"localizer." + s.name, s.tensor});
  }
  return all;
}

template <typename T>
void SpatialTransformer<T>::init_params(nn::InitScheme scheme, Rng& rng) {
  localizer_->init_params(scheme, rng);
  // Point the regression at the identity transform: zero weights, identity
  // bias on the last linear layer.
  for (size_t i = localizer_->size(); i-- > 0;) {
    if (auto* lin = dynamic_cast<nn::Linear<T>*>(&localizer_->layer(i))) {
      if (lin->out_features() != mode_params(mode_)) {
        throw ConfigError(
            "spatial_transformer: localizer emits " +
            std::to_string(lin->out_features()) + " params, mode " +
            mode_name(mode_) + " wants " + std::to_string(mode_params(mode_)));
      }
      lin->weight().zero();
      const Tensor<T> id = identity_params<T>(mode_);
      std::copy(id.data(), id.data() + id.size(), lin->bias().data());
      return;
    }
  }
  throw ConfigError("spatial_transformer: localizer has no linear layer");
}

template <typename T>
void SpatialTransformer<T>::seed_runtime(uint64_t seed) {
  localizer_->seed_runtime(seed);
}

template <typename T>
void SpatialTransformer<T>::set_train(bool train) {
  this->train_ = train;
  localizer_->set_train(train);
}

// ---------------------------------------------------------------------------

#define WSNN_INSTANTIATE_STN(T)                                              \
  template Tensor<T> expand_params<T>(const Tensor<T>&, Mode, T);            \
  template Tensor<T> expand_params_backward<T>(const Tensor<T>&, Mode,       \
                                               const Tensor<T>&);            \
  template Tensor<T> affine_grid<T>(const Tensor<T>&, size_t, size_t);       \
  template Tensor<T> affine_grid_backward<T>(const Tensor<T>&);              \
  template Tensor<T> bilinear_sample<T>(const Tensor<T>&, const Tensor<T>&); \
  template BilinearGrads<T> bilinear_sample_backward<T>(                     \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> downsample<T>(const Tensor<T>&, size_t, size_t);        \
  template Tensor<T> downsample_backward<T>(const Tensor<T>&, size_t,        \
                                            size_t, const Tensor<T>&);       \
  template Tensor<T> identity_params<T>(Mode);                               \
  template class SpatialTransformer<T>;

WSNN_INSTANTIATE_STN(float)
WSNN_INSTANTIATE_STN(double)

}  // namespace wsnn::stn
