#include "wsnn/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wsnn::nn {

namespace {

template <typename T>
void require_rank(const Tensor<T>& x, size_t rank, const char* who) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(who) + ": expected rank-" +
                     std::to_string(rank) + " input, got " +
                     detail::shape_str(x.shape()));
  }
}

template <typename T>
T stable_sigmoid(T v) {
  if (v >= T(0)) {
    const T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

void require_cache(bool have, const char* who) {
  if (!have) {
    throw Error(std::string(who) + ": backward called without forward");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(size_t in_features, size_t out_features)
    : in_(in_features),
      out_(out_features),
      weight_({out_features, in_features}),
      bias_({out_features}),
      dweight_({out_features, in_features}),
      dbias_({out_features}) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  require_rank(x, 2, "linear");
  if (x.dim(1) != in_) {
    throw ShapeError("linear: input width " + std::to_string(x.dim(1)) +
                     " != " + std::to_string(in_));
  }
  const size_t B = x.dim(0);
  Tensor<T> y({B, out_});
  kernels::gemm_nt(B, out_, in_, T(1), x.data(), in_, weight_.data(), in_,
                   T(0), y.data(), out_);
  for (size_t b = 0; b < B; ++b) {
    kernels::add(out_, y.data() + b * out_, bias_.data(), y.data() + b * out_);
  }
  input_ = x;
  have_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "linear");
  const size_t B = input_.dim(0);
  if (grad_out.rank() != 2 || grad_out.dim(0) != B || grad_out.dim(1) != out_) {
    throw ShapeError("linear: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  // dW += dy^T x ; db += sum_b dy ; dx = dy W
  kernels::gemm_tn(out_, in_, B, T(1), grad_out.data(), out_, input_.data(),
                   in_, T(1), dweight_.data(), in_);
  for (size_t b = 0; b < B; ++b) {
    kernels::axpy(out_, T(1), grad_out.data() + b * out_, dbias_.data());
  }
  Tensor<T> dx({B, in_});
  kernels::gemm_nn(B, in_, out_, T(1), grad_out.data(), out_, weight_.data(),
                   in_, T(0), dx.data(), in_);
  return dx;
}

template <typename T>
std::vector<Param<T>> Linear<T>::params() {
  return {{"weight", &weight_, &dweight_}, {"bias", &bias_, &dbias_}};
}

template <typename T>
void Linear<T>::init_params(InitScheme scheme, Rng& rng) {
  const double fan_in = static_cast<double>(in_);
  const double sigma = scheme == InitScheme::paper_literal
                           ? 1.0 / fan_in
                           : 1.0 / std::sqrt(fan_in);
  for (size_t i = 0; i < weight_.size(); ++i) {
    weight_(i) = static_cast<T>(rng.normal(0.0, sigma));
  }
  bias_.zero();
  dweight_.zero();
  dbias_.zero();
}

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------

const char* act_name(Act a) {
  switch (a) {
    case Act::relu: return "relu";
    case Act::sigmoid: return "sigmoid";
    case Act::tanh: return "tanh";
  }
  return "?";
}

template <typename T>
Tensor<T> Activation<T>::forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* src = x.data();
  T* dst = y.data();
  const size_t n = x.size();
  switch (kind_) {
    case Act::relu:
      kernels::relu_fwd(n, src, dst);
      cache_ = x;  // mask source
      break;
    case Act::sigmoid:
      for (size_t i = 0; i < n; ++i) dst[i] = stable_sigmoid(src[i]);
      cache_ = y;  // derivative is s(1-s)
      break;
    case Act::tanh:
      for (size_t i = 0; i < n; ++i) dst[i] = std::tanh(src[i]);
      cache_ = y;  // derivative is 1-t^2
      break;
  }
  have_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> Activation<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "activation");
  if (grad_out.shape() != cache_.shape()) {
    throw ShapeError("activation: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  Tensor<T> dx(grad_out.shape());
  const size_t n = grad_out.size();
  const T* dy = grad_out.data();
  const T* c = cache_.data();
  T* out = dx.data();
  switch (kind_) {
    case Act::relu:
      kernels::relu_bwd(n, c, dy, out);
      break;
    case Act::sigmoid:
      for (size_t i = 0; i < n; ++i) out[i] = dy[i] * c[i] * (T(1) - c[i]);
      break;
    case Act::tanh:
      for (size_t i = 0; i < n; ++i) out[i] = dy[i] * (T(1) - c[i] * c[i]);
      break;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(size_t in_channels, size_t out_channels, size_t kh,
                  size_t kw, size_t stride_h, size_t stride_w, size_t pad_h,
                  size_t pad_w)
    : c_in_(in_channels),
      c_out_(out_channels),
      kh_(kh),
      kw_(kw),
      sh_(stride_h),
      sw_(stride_w),
      ph_(pad_h),
      pw_(pad_w),
      weight_({out_channels, in_channels, kh, kw}),
      bias_({out_channels}),
      dweight_({out_channels, in_channels, kh, kw}),
      dbias_({out_channels}) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "conv2d");
  if (x.dim(1) != c_in_) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " != " + std::to_string(c_in_));
  }
  const auto g = detail::ConvGeom::make(c_in_, x.dim(2), x.dim(3), kh_, kw_,
                                        sh_, sw_, ph_, pw_);
  const size_t B = x.dim(0);
  const size_t ckk = g.rows(), L = g.cols();
  Tensor<T> out({B, c_out_, g.out_h, g.out_w});
  Tensor<T> col({ckk, L});
  const size_t in_stride = c_in_ * g.height * g.width;
  const size_t out_stride = c_out_ * L;
  for (size_t b = 0; b < B; ++b) {
    detail::im2col_ptr(g, x.data() + b * in_stride, col.data());
    T* dst = out.data() + b * out_stride;
    kernels::gemm_nn(c_out_, L, ckk, T(1), weight_.data(), ckk, col.data(), L,
                     T(0), dst, L);
    for (size_t k = 0; k < c_out_; ++k) {
      const T bk = bias_(k);
      T* row = dst + k * L;
      for (size_t i = 0; i < L; ++i) row[i] += bk;
    }
  }
  input_ = x;
  have_cache_ = true;
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "conv2d");
  const auto g = detail::ConvGeom::make(c_in_, input_.dim(2), input_.dim(3),
                                        kh_, kw_, sh_, sw_, ph_, pw_);
  const size_t B = input_.dim(0);
  const size_t ckk = g.rows(), L = g.cols();
  if (grad_out.rank() != 4 || grad_out.dim(0) != B ||
      grad_out.dim(1) != c_out_ || grad_out.dim(2) != g.out_h ||
      grad_out.dim(3) != g.out_w) {
    throw ShapeError("conv2d: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  Tensor<T> dx(input_.shape());
  Tensor<T> col({ckk, L});
  Tensor<T> dcol({ckk, L});
  std::vector<size_t> nzcols;
  Tensor<T> packed_dy, packed_col, packed_dcol;
  const size_t in_stride = c_in_ * g.height * g.width;
  const size_t out_stride = c_out_ * L;

  for (size_t b = 0; b < B; ++b) {
    const T* dy = grad_out.data() + b * out_stride;
    const T* xb = input_.data() + b * in_stride;
    T* dxb = dx.data() + b * in_stride;

    for (size_t k = 0; k < c_out_; ++k) {
      dbias_(k) += kernels::sum(L, dy + k * L);
    }

    // Weak-supervision heads make dy spatially sparse (a handful of nonzero
    // output positions); detect that and run the GEMMs on the packed nonzero
    // columns only. The dense and packed paths are numerically identical --
    // zero columns contribute exact zeros.
    nzcols.clear();
    {
      std::vector<uint8_t> nz(L, 0);
      for (size_t k = 0; k < c_out_; ++k) {
        const T* row = dy + k * L;
        for (size_t l = 0; l < L; ++l) nz[l] |= (row[l] != T(0));
      }
      for (size_t l = 0; l < L; ++l) {
        if (nz[l]) nzcols.push_back(l);
      }
    }
    const size_t nnz = nzcols.size();

    if (nnz * 2 < L) {
      std::fill(dxb, dxb + in_stride, T(0));
      if (nnz == 0) continue;
      packed_dy = Tensor<T>({c_out_, nnz});
      for (size_t k = 0; k < c_out_; ++k) {
        const T* row = dy + k * L;
        T* prow = packed_dy.data() + k * nnz;
        for (size_t s = 0; s < nnz; ++s) prow[s] = row[nzcols[s]];
      }
      packed_col = Tensor<T>({ckk, nnz});
      detail::im2col_cols(g, xb, nzcols.data(), nnz, packed_col.data());
      kernels::gemm_nt(c_out_, ckk, nnz, T(1), packed_dy.data(), nnz,
                       packed_col.data(), nnz, T(1), dweight_.data(), ckk);
      packed_dcol = Tensor<T>({ckk, nnz});
      kernels::gemm_tn(ckk, nnz, c_out_, T(1), weight_.data(), ckk,
                       packed_dy.data(), nnz, T(0), packed_dcol.data(), nnz);
      detail::col2im_cols(g, packed_dcol.data(), nzcols.data(), nnz, dxb);
    } else {
      detail::im2col_ptr(g, xb, col.data());
      kernels::gemm_nt(c_out_, ckk, L, T(1), dy, L, col.data(), L, T(1),
                       dweight_.data(), ckk);
      kernels::gemm_tn(ckk, L, c_out_, T(1), weight_.data(), ckk, dy, L, T(0),
                       dcol.data(), L);
      detail::col2im_ptr(g, dcol.data(), dxb);
    }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>> Conv2d<T>::params() {
  return {{"weight", &weight_, &dweight_}, {"bias", &bias_, &dbias_}};
}

template <typename T>
void Conv2d<T>::init_params(InitScheme scheme, Rng& rng) {
  const double fan_in = static_cast<double>(c_in_ * kh_ * kw_);
  const double sigma = scheme == InitScheme::paper_literal
                           ? 1.0 / fan_in
                           : 1.0 / std::sqrt(fan_in);
  for (size_t i = 0; i < weight_.size(); ++i) {
    weight_(i) = static_cast<T>(rng.normal(0.0, sigma));
  }
  bias_.zero();
  dweight_.zero();
  dbias_.zero();
}

// ---------------------------------------------------------------------------
// MaxPool2d
// ---------------------------------------------------------------------------

template <typename T>
MaxPool2d<T>::MaxPool2d(size_t kh, size_t kw, size_t stride_h, size_t stride_w,
                        size_t pad_h, size_t pad_w)
    : kh_(kh), kw_(kw), sh_(stride_h), sw_(stride_w), ph_(pad_h), pw_(pad_w) {}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "maxpool2d");
  const auto g = detail::ConvGeom::make(1, x.dim(2), x.dim(3), kh_, kw_, sh_,
                                        sw_, ph_, pw_);
  const size_t B = x.dim(0), C = x.dim(1), H = g.height, W = g.width;
  Tensor<T> out({B, C, g.out_h, g.out_w});
  argmax_ = Tensor<int64_t>({B, C, g.out_h, g.out_w});
  const T* src = x.data();
  T* dst = out.data();
  int64_t* am = argmax_.data();
  for (size_t p = 0; p < B * C; ++p) {
    const T* plane = src + p * H * W;
    for (size_t oy = 0; oy < g.out_h; ++oy) {
      for (size_t ox = 0; ox < g.out_w; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_idx = -1;
        for (size_t ki = 0; ki < kh_; ++ki) {
          const long long iy = static_cast<long long>(oy * sh_ + ki) - ph_;
          if (iy < 0 || iy >= static_cast<long long>(H)) continue;
          for (size_t kj = 0; kj < kw_; ++kj) {
            const long long ix = static_cast<long long>(ox * sw_ + kj) - pw_;
            if (ix < 0 || ix >= static_cast<long long>(W)) continue;
            const T v = plane[iy * W + ix];
            if (v > best) {
              best = v;
              best_idx = iy * W + ix;
            }
          }
        }
        *dst++ = best_idx < 0 ? T(0) : best;
        *am++ = best_idx;
      }
    }
  }
  in_shape_ = x.shape();
  have_cache_ = true;
  return out;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "maxpool2d");
  if (grad_out.shape() != argmax_.shape()) {
    throw ShapeError("maxpool2d: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  Tensor<T> dx(in_shape_);
  const size_t plane = in_shape_[2] * in_shape_[3];
  const size_t planes = in_shape_[0] * in_shape_[1];
  const size_t out_plane = grad_out.dim(2) * grad_out.dim(3);
  const T* dy = grad_out.data();
  const int64_t* am = argmax_.data();
  T* dst = dx.data();
  for (size_t p = 0; p < planes; ++p) {
    T* dplane = dst + p * plane;
    for (size_t i = 0; i < out_plane; ++i) {
      const int64_t idx = am[p * out_plane + i];
      if (idx >= 0) dplane[idx] += dy[p * out_plane + i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// AvgPool2d
// ---------------------------------------------------------------------------

template <typename T>
AvgPool2d<T>::AvgPool2d(size_t kh, size_t kw, size_t stride_h, size_t stride_w,
                        size_t pad_h, size_t pad_w)
    : kh_(kh), kw_(kw), sh_(stride_h), sw_(stride_w), ph_(pad_h), pw_(pad_w) {}

template <typename T>
Tensor<T> AvgPool2d<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "avgpool2d");
  const auto g = detail::ConvGeom::make(1, x.dim(2), x.dim(3), kh_, kw_, sh_,
                                        sw_, ph_, pw_);
  const size_t H = g.height, W = g.width;
  Tensor<T> out({x.dim(0), x.dim(1), g.out_h, g.out_w});
  const T inv = T(1) / static_cast<T>(kh_ * kw_);
  const T* src = x.data();
  T* dst = out.data();
  for (size_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
    const T* plane = src + p * H * W;
    for (size_t oy = 0; oy < g.out_h; ++oy) {
      for (size_t ox = 0; ox < g.out_w; ++ox) {
        T acc = T(0);
        for (size_t ki = 0; ki < kh_; ++ki) {
          const long long iy = static_cast<long long>(oy * sh_ + ki) - ph_;
          if (iy < 0 || iy >= static_cast<long long>(H)) continue;
          for (size_t kj = 0; kj < kw_; ++kj) {
            const long long ix = static_cast<long long>(ox * sw_ + kj) - pw_;
            if (ix < 0 || ix >= static_cast<long long>(W)) continue;
            acc += plane[iy * W + ix];
          }
        }
        *dst++ = acc * inv;
      }
    }
  }
  in_shape_ = x.shape();
  have_cache_ = true;
  return out;
}

template <typename T>
Tensor<T> AvgPool2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "avgpool2d");
  const auto g = detail::ConvGeom::make(1, in_shape_[2], in_shape_[3], kh_,
                                        kw_, sh_, sw_, ph_, pw_);
  if (grad_out.rank() != 4 || grad_out.dim(2) != g.out_h ||
      grad_out.dim(3) != g.out_w) {
    throw ShapeError("avgpool2d: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  Tensor<T> dx(in_shape_);
  const size_t H = g.height, W = g.width;
  const T inv = T(1) / static_cast<T>(kh_ * kw_);
  const T* dy = grad_out.data();
  T* dst = dx.data();
  for (size_t p = 0; p < in_shape_[0] * in_shape_[1]; ++p) {
    T* plane = dst + p * H * W;
    for (size_t oy = 0; oy < g.out_h; ++oy) {
      for (size_t ox = 0; ox < g.out_w; ++ox) {
        const T v = *dy++ * inv;
        for (size_t ki = 0; ki < kh_; ++ki) {
          const long long iy = static_cast<long long>(oy * sh_ + ki) - ph_;
          if (iy < 0 || iy >= static_cast<long long>(H)) continue;
          for (size_t kj = 0; kj < kw_; ++kj) {
            const long long ix = static_cast<long long>(ox * sw_ + kj) - pw_;
            if (ix < 0 || ix >= static_cast<long long>(W)) continue;
            plane[iy * W + ix] += v;
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(size_t channels, T eps, T momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(Tensor<T>::full({channels}, T(1))),
      beta_({channels}),
      dgamma_({channels}),
      dbeta_({channels}),
      running_mean_({channels}),
      running_var_(Tensor<T>::full({channels}, T(1))) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "batchnorm2d");
  if (x.dim(1) != channels_) {
    throw ShapeError("batchnorm2d: channels " + std::to_string(x.dim(1)) +
                     " != " + std::to_string(channels_));
  }
  const size_t B = x.dim(0), C = channels_, HW = x.dim(2) * x.dim(3);
  const size_t N = B * HW;
  Tensor<T> y(x.shape());

  if (this->is_train()) {
    if (N < 2) {
      throw ShapeError("batchnorm2d: train mode needs at least 2 values per "
                       "channel, got " + std::to_string(N));
    }
    batch_mean_ = Tensor<T>({C});
    batch_var_ = Tensor<T>({C});
    for (size_t c = 0; c < C; ++c) {
      T s = T(0);
      for (size_t b = 0; b < B; ++b) {
        s += kernels::sum(HW, x.data() + (b * C + c) * HW);
      }
      const T mean = s / static_cast<T>(N);
      T sq = T(0);
      for (size_t b = 0; b < B; ++b) {
        const T* p = x.data() + (b * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) {
          const T d = p[i] - mean;
          sq += d * d;
        }
      }
      const T var = sq / static_cast<T>(N);
      batch_mean_(c) = mean;
      batch_var_(c) = var;
      running_mean_(c) = (T(1) - momentum_) * running_mean_(c) + momentum_ * mean;
      running_var_(c) = (T(1) - momentum_) * running_var_(c) + momentum_ * var;
      const T inv_std = T(1) / std::sqrt(var + eps_);
      const T gc = gamma_(c), bc = beta_(c);
      for (size_t b = 0; b < B; ++b) {
        const T* p = x.data() + (b * C + c) * HW;
        T* q = y.data() + (b * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) {
          q[i] = gc * (p[i] - mean) * inv_std + bc;
        }
      }
    }
    input_ = x;
    have_cache_ = true;
    cached_train_ = true;
  } else {
    for (size_t c = 0; c < C; ++c) {
      const T inv_std = T(1) / std::sqrt(running_var_(c) + eps_);
      const T gc = gamma_(c), bc = beta_(c), mean = running_mean_(c);
      for (size_t b = 0; b < B; ++b) {
        const T* p = x.data() + (b * C + c) * HW;
        T* q = y.data() + (b * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) {
          q[i] = gc * (p[i] - mean) * inv_std + bc;
        }
      }
    }
    input_ = x;
    have_cache_ = true;
    cached_train_ = false;
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "batchnorm2d");
  if (grad_out.shape() != input_.shape()) {
    throw ShapeError("batchnorm2d: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  const size_t B = input_.dim(0), C = channels_;
  const size_t HW = input_.dim(2) * input_.dim(3);
  const size_t N = B * HW;
  Tensor<T> dx(input_.shape());

  for (size_t c = 0; c < C; ++c) {
    const T mean = cached_train_ ? batch_mean_(c) : running_mean_(c);
    const T var = cached_train_ ? batch_var_(c) : running_var_(c);
    const T inv_std = T(1) / std::sqrt(var + eps_);
    const T gc = gamma_(c);

    // accumulate per-channel sums of dy and dy*(x-mean)
    T sum_dy = T(0), sum_dy_xmu = T(0);
    for (size_t b = 0; b < B; ++b) {
      const T* dy = grad_out.data() + (b * C + c) * HW;
      const T* xp = input_.data() + (b * C + c) * HW;
      for (size_t i = 0; i < HW; ++i) {
        sum_dy += dy[i];
        sum_dy_xmu += dy[i] * (xp[i] - mean);
      }
    }
    dbeta_(c) += sum_dy;
    dgamma_(c) += sum_dy_xmu * inv_std;

    if (cached_train_) {
      // full backward through the batch statistics
      const T invN = T(1) / static_cast<T>(N);
      for (size_t b = 0; b < B; ++b) {
        const T* dy = grad_out.data() + (b * C + c) * HW;
        const T* xp = input_.data() + (b * C + c) * HW;
        T* dst = dx.data() + (b * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) {
          const T xhat = (xp[i] - mean) * inv_std;
          dst[i] = gc * inv_std *
                   (dy[i] - sum_dy * invN - xhat * sum_dy_xmu * inv_std * invN);
        }
      }
    } else {
      // eval statistics are constants
      for (size_t b = 0; b < B; ++b) {
        const T* dy = grad_out.data() + (b * C + c) * HW;
        T* dst = dx.data() + (b * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) dst[i] = dy[i] * gc * inv_std;
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>> BatchNorm2d<T>::params() {
  return {{"gamma", &gamma_, &dgamma_}, {"beta", &beta_, &dbeta_}};
}

template <typename T>
std::vector<NamedState<T>> BatchNorm2d<T>::state() {
  return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
}

template <typename T>
void BatchNorm2d<T>::init_params(InitScheme, Rng&) {
  gamma_.fill(T(1));
  beta_.zero();
  dgamma_.zero();
  dbeta_.zero();
  running_mean_.zero();
  running_var_.fill(T(1));
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0,1), got " +
                      std::to_string(rate));
  }
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x) {
  if (!this->is_train() || rate_ == 0.0) {
    mask_ = Tensor<uint8_t>();  // marks the identity path for backward
    have_cache_ = true;
    return x;
  }
  const size_t n = x.size();
  if (!(frozen_ && mask_.size() == n && mask_.rank() == 1)) {
    mask_ = Tensor<uint8_t>({n});
    for (size_t i = 0; i < n; ++i) {
      mask_(i) = rng_.bernoulli(rate_) ? 0 : 1;
    }
  }
  const T scale = T(1) / static_cast<T>(1.0 - rate_);
  Tensor<T> y(x.shape());
  const T* src = x.data();
  T* dst = y.data();
  for (size_t i = 0; i < n; ++i) {
    dst[i] = mask_(i) ? src[i] * scale : T(0);
  }
  have_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "dropout");
  if (mask_.rank() == 0) return grad_out;  // identity path
  if (grad_out.size() != mask_.size()) {
    throw ShapeError("dropout: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  const T scale = T(1) / static_cast<T>(1.0 - rate_);
  Tensor<T> dx(grad_out.shape());
  const T* dy = grad_out.data();
  T* dst = dx.data();
  for (size_t i = 0; i < grad_out.size(); ++i) {
    dst[i] = mask_(i) ? dy[i] * scale : T(0);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LogSoftmax
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> LogSoftmax<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("logsoftmax: expected [BxC] or [BxCxHxW], got " +
                     detail::shape_str(x.shape()));
  }
  const size_t B = x.dim(0), C = x.dim(1);
  const size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  Tensor<T> y(x.shape());
  const T* src = x.data();
  T* dst = y.data();
  for (size_t b = 0; b < B; ++b) {
    for (size_t i = 0; i < inner; ++i) {
      const size_t base = b * C * inner + i;
      T mx = src[base];
      for (size_t c = 1; c < C; ++c) {
        mx = std::max(mx, src[base + c * inner]);
      }
      T lse = T(0);
      for (size_t c = 0; c < C; ++c) {
        lse += std::exp(src[base + c * inner] - mx);
      }
      lse = mx + std::log(lse);
      for (size_t c = 0; c < C; ++c) {
        dst[base + c * inner] = src[base + c * inner] - lse;
      }
    }
  }
  output_ = y;
  have_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> LogSoftmax<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "logsoftmax");
  if (grad_out.shape() != output_.shape()) {
    throw ShapeError("logsoftmax: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  const size_t B = output_.dim(0), C = output_.dim(1);
  const size_t inner = output_.rank() == 4 ? output_.dim(2) * output_.dim(3) : 1;
  Tensor<T> dx(output_.shape());
  const T* dy = grad_out.data();
  const T* out = output_.data();
  T* dst = dx.data();
  for (size_t b = 0; b < B; ++b) {
    for (size_t i = 0; i < inner; ++i) {
      const size_t base = b * C * inner + i;
      T total = T(0);
      for (size_t c = 0; c < C; ++c) total += dy[base + c * inner];
      for (size_t c = 0; c < C; ++c) {
        const size_t off = base + c * inner;
        dst[off] = dy[off] - std::exp(out[off]) * total;
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Flatten
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x) {
  require_rank(x, 4, "flatten");
  in_shape_ = x.shape();
  have_cache_ = true;
  Tensor<T> y = x;
  return std::move(y).reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad_out) {
  require_cache(have_cache_, "flatten");
  if (grad_out.size() != detail::shape_size(in_shape_)) {
    throw ShapeError("flatten: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  Tensor<T> dx = grad_out;
  return std::move(dx).reshaped(in_shape_);
}

// ---------------------------------------------------------------------------

#define WSNN_INSTANTIATE_LAYERS(T) \
  template class Linear<T>;        \
  template class Activation<T>;    \
  template class Conv2d<T>;        \
  template class MaxPool2d<T>;     \
  template class AvgPool2d<T>;     \
  template class BatchNorm2d<T>;   \
  template class Dropout<T>;       \
  template class LogSoftmax<T>;    \
  template class Flatten<T>;

WSNN_INSTANTIATE_LAYERS(float)
WSNN_INSTANTIATE_LAYERS(double)

}  // namespace wsnn::nn
