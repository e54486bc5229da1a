#include "wsnn/tensor.hpp"

#include <algorithm>

namespace wsnn {

namespace detail {

std::string shape_str(const std::vector<size_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

ConvGeom ConvGeom::make(size_t c, size_t h, size_t w, size_t kh, size_t kw,
                        size_t sh, size_t sw, size_t ph, size_t pw) {
  if (c == 0 || h == 0 || w == 0 || kh == 0 || kw == 0 || sh == 0 || sw == 0) {
    throw ShapeError("conv geometry: zero extent");
  }
  const long long span_h = static_cast<long long>(h) + 2 * ph - kh;
  const long long span_w = static_cast<long long>(w) + 2 * pw - kw;
  if (span_h < 0 || span_w < 0 || span_h % sh != 0 || span_w % sw != 0) {
    throw ShapeError("conv geometry: input " + std::to_string(h) + "x" +
                     std::to_string(w) + ", kernel " + std::to_string(kh) +
                     "x" + std::to_string(kw) + ", stride " +
                     std::to_string(sh) + "x" + std::to_string(sw) + ", pad " +
                     std::to_string(ph) + "x" + std::to_string(pw) +
                     " does not tile to an integer output size");
  }
  ConvGeom g;
  g.channels = c;
  g.height = h;
  g.width = w;
  g.kh = kh;
  g.kw = kw;
  g.stride_h = sh;
  g.stride_w = sw;
  g.pad_h = ph;
  g.pad_w = pw;
  g.out_h = static_cast<size_t>(span_h) / sh + 1;
  g.out_w = static_cast<size_t>(span_w) / sw + 1;
  return g;
}

template <typename T>
void im2col_ptr(const ConvGeom& g, const T* x, T* col) {
  // col row (c, i, j) holds, for every output position, the input pixel that
  // kernel tap (i, j) of channel c sees; out-of-image taps are zero.
  const size_t cols = g.cols();
  T* dst = col;
  for (size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (size_t ki = 0; ki < g.kh; ++ki) {
      for (size_t kj = 0; kj < g.kw; ++kj) {
        for (size_t oy = 0; oy < g.out_h; ++oy) {
          const long long iy =
              static_cast<long long>(oy * g.stride_h + ki) - g.pad_h;
          if (iy < 0 || iy >= static_cast<long long>(g.height)) {
            for (size_t ox = 0; ox < g.out_w; ++ox) *dst++ = T(0);
            continue;
          }
          const T* row = plane + static_cast<size_t>(iy) * g.width;
          for (size_t ox = 0; ox < g.out_w; ++ox) {
            const long long ix =
                static_cast<long long>(ox * g.stride_w + kj) - g.pad_w;
            *dst++ = (ix < 0 || ix >= static_cast<long long>(g.width))
                         ? T(0)
                         : row[static_cast<size_t>(ix)];
          }
        }
      }
    }
  }
  (void)cols;
}

template <typename T>
void col2im_ptr(const ConvGeom& g, const T* col, T* x) {
  std::fill(x, x + g.channels * g.height * g.width, T(0));
  const T* src = col;
  for (size_t c = 0; c < g.channels; ++c) {
    T* plane = x + c * g.height * g.width;
    for (size_t ki = 0; ki < g.kh; ++ki) {
      for (size_t kj = 0; kj < g.kw; ++kj) {
        for (size_t oy = 0; oy < g.out_h; ++oy) {
          const long long iy =
              static_cast<long long>(oy * g.stride_h + ki) - g.pad_h;
          if (iy < 0 || iy >= static_cast<long long>(g.height)) {
            src += g.out_w;
            continue;
          }
          T* row = plane + static_cast<size_t>(iy) * g.width;
          for (size_t ox = 0; ox < g.out_w; ++ox) {
            const long long ix =
                static_cast<long long>(ox * g.stride_w + kj) - g.pad_w;
            if (ix >= 0 && ix < static_cast<long long>(g.width)) {
              row[static_cast<size_t>(ix)] += *src;
            }
            ++src;
          }
        }
      }
    }
  }
}

template <typename T>
void im2col_cols(const ConvGeom& g, const T* x, const size_t* col_ids,
                 size_t ncols, T* out) {
  // Packed variant: materialize only the selected output positions, giving
  // an out matrix of [rows() x ncols] with the same row layout as im2col_ptr.
  for (size_t s = 0; s < ncols; ++s) {
    const size_t l = col_ids[s];
    const size_t oy = l / g.out_w, ox = l % g.out_w;
    size_t r = 0;
    for (size_t c = 0; c < g.channels; ++c) {
      const T* plane = x + c * g.height * g.width;
      for (size_t ki = 0; ki < g.kh; ++ki) {
        const long long iy =
            static_cast<long long>(oy * g.stride_h + ki) - g.pad_h;
        for (size_t kj = 0; kj < g.kw; ++kj, ++r) {
          const long long ix =
              static_cast<long long>(ox * g.stride_w + kj) - g.pad_w;
          out[r * ncols + s] =
              (iy < 0 || iy >= static_cast<long long>(g.height) || ix < 0 ||
               ix >= static_cast<long long>(g.width))
                  ? T(0)
                  : plane[static_cast<size_t>(iy) * g.width +
                          static_cast<size_t>(ix)];
        }
      }
    }
  }
}

template <typename T>
void col2im_cols(const ConvGeom& g, const T* col, const size_t* col_ids,
                 size_t ncols, T* x) {
  // Accumulates into x, which the caller must have zeroed.
  for (size_t s = 0; s < ncols; ++s) {
    const size_t l = col_ids[s];
    const size_t oy = l / g.out_w, ox = l % g.out_w;
    size_t r = 0;
    for (size_t c = 0; c < g.channels; ++c) {
      T* plane = x + c * g.height * g.width;
      for (size_t ki = 0; ki < g.kh; ++ki) {
        const long long iy =
            static_cast<long long>(oy * g.stride_h + ki) - g.pad_h;
        for (size_t kj = 0; kj < g.kw; ++kj, ++r) {
          const long long ix =
              static_cast<long long>(ox * g.stride_w + kj) - g.pad_w;
          if (iy >= 0 && iy < static_cast<long long>(g.height) && ix >= 0 &&
              ix < static_cast<long long>(g.width)) {
            plane[static_cast<size_t>(iy) * g.width +
                  static_cast<size_t>(ix)] += col[r * ncols + s];
          }
        }
      }
    }
  }
}

template void im2col_ptr<float>(const ConvGeom&, const float*, float*);
template void im2col_ptr<double>(const ConvGeom&, const double*, double*);
template void col2im_ptr<float>(const ConvGeom&, const float*, float*);
template void col2im_ptr<double>(const ConvGeom&, const double*, double*);
template void im2col_cols<float>(const ConvGeom&, const float*, const size_t*,
                                 size_t, float*);
template void im2col_cols<double>(const ConvGeom&, const double*,
                                  const size_t*, size_t, double*);
template void col2im_cols<float>(const ConvGeom&, const float*, const size_t*,
                                 size_t, float*);
template void col2im_cols<double>(const ConvGeom&, const double*,
                                  const size_t*, size_t, double*);

}  // namespace detail

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     detail::shape_str(a.shape()) + " vs " +
                     detail::shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " +
                     detail::shape_str(a.shape()) + " x " +
                     detail::shape_str(b.shape()));
  }
  const size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<T> c({M, N});
  kernels::gemm_nn(M, N, K, T(1), a.data(), K, b.data(), N, T(0), c.data(), N);
  c.require_finite("matmul");
  return c;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> y(a.shape());
  kernels::add(a.size(), a.data(), b.data(), y.data());
  y.require_finite("add");
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> y(a.shape());
  kernels::sub(a.size(), a.data(), b.data(), y.data());
  y.require_finite("sub");
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> y(a.shape());
  kernels::mul(a.size(), a.data(), b.data(), y.data());
  y.require_finite("mul");
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T scalar) {
  Tensor<T> y(a.shape());
  const T* src = a.data();
  T* dst = y.data();
  for (size_t i = 0; i < a.size(); ++i) dst[i] = src[i] + scalar;
  y.require_finite("add");
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, T scalar) {
  Tensor<T> y(a.shape());
  const T* src = a.data();
  T* dst = y.data();
  for (size_t i = 0; i < a.size(); ++i) dst[i] = src[i] * scalar;
  y.require_finite("mul");
  return y;
}

template <typename T>
MaxReduceResult<T> reduce_max_with_index(const Tensor<T>& x,
                                         std::vector<size_t> axes) {
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
    throw ShapeError("reduce_max_with_index: duplicate axis");
  }
  for (size_t ax : axes) {
    if (ax >= x.rank()) {
      throw ShapeError("reduce_max_with_index: axis " + std::to_string(ax) +
                       " out of range for rank " + std::to_string(x.rank()));
    }
  }
  const size_t r = x.rank();
  std::vector<bool> reduced(r, false);
  for (size_t ax : axes) reduced[ax] = true;

  std::vector<size_t> stride(r, 1);
  for (size_t i = r; i-- > 1;) stride[i - 1] = stride[i] * x.shape()[i];

  std::vector<size_t> kept_dims, kept_strides, red_dims, red_strides;
  for (size_t i = 0; i < r; ++i) {
    if (reduced[i]) {
      red_dims.push_back(x.shape()[i]);
      red_strides.push_back(stride[i]);
    } else {
      kept_dims.push_back(x.shape()[i]);
      kept_strides.push_back(stride[i]);
    }
  }

  MaxReduceResult<T> out{Tensor<T>(kept_dims), Tensor<int64_t>(kept_dims)};
  const size_t n_out = out.values.size();
  const size_t block = detail::shape_size(red_dims);
  const T* src = x.data();

  std::vector<size_t> kidx(kept_dims.size(), 0);
  for (size_t o = 0; o < n_out; ++o) {
    size_t base = 0;
    for (size_t i = 0; i < kidx.size(); ++i) base += kidx[i] * kept_strides[i];

    // scan the reduced block in row-major order; first strict max wins
    std::vector<size_t> ridx(red_dims.size(), 0);
    T best = src[base];
    size_t best_flat = 0;
    for (size_t f = 1; f < block; ++f) {
      // advance the row-major multi-index over the reduced dims
      for (size_t i = red_dims.size(); i-- > 0;) {
        if (++ridx[i] < red_dims[i]) break;
        ridx[i] = 0;
      }
      size_t off = base;
      for (size_t i = 0; i < ridx.size(); ++i) off += ridx[i] * red_strides[i];
      if (src[off] > best) {
        best = src[off];
        best_flat = f;
      }
    }
    out.values(o) = best;
    out.indices(o) = static_cast<int64_t>(best_flat);

    for (size_t i = kidx.size(); i-- > 0;) {
      if (++kidx[i] < kept_dims[i]) break;
      kidx[i] = 0;
    }
  }
  out.values.require_finite("reduce_max_with_index");
  return out;
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& x, size_t kh, size_t kw, size_t stride_h,
                 size_t stride_w, size_t pad_h, size_t pad_w) {
  if (x.rank() != 3) {
    throw ShapeError("im2col: expected [CxHxW], got " +
                     detail::shape_str(x.shape()));
  }
  const auto g = detail::ConvGeom::make(x.dim(0), x.dim(1), x.dim(2), kh, kw,
                                        stride_h, stride_w, pad_h, pad_w);
  Tensor<T> col({g.rows(), g.cols()});
  detail::im2col_ptr(g, x.data(), col.data());
  col.require_finite("im2col");
  return col;
}

template <typename T>
Tensor<T> col2im(const Tensor<T>& col, size_t channels, size_t height,
                 size_t width, size_t kh, size_t kw, size_t stride_h,
                 size_t stride_w, size_t pad_h, size_t pad_w) {
  const auto g = detail::ConvGeom::make(channels, height, width, kh, kw,
                                        stride_h, stride_w, pad_h, pad_w);
  if (col.rank() != 2 || col.dim(0) != g.rows() || col.dim(1) != g.cols()) {
    throw ShapeError("col2im: expected [" + std::to_string(g.rows()) + "x" +
                     std::to_string(g.cols()) + "], got " +
                     detail::shape_str(col.shape()));
  }
  Tensor<T> x({channels, height, width});
  detail::col2im_ptr(g, col.data(), x.data());
  x.require_finite("col2im");
  return x;
}

#define WSNN_INSTANTIATE_OPS(T)                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> add(const Tensor<T>&, T);                               \
  template Tensor<T> mul(const Tensor<T>&, T);                               \
  template MaxReduceResult<T> reduce_max_with_index(const Tensor<T>&,        \
                                                    std::vector<size_t>);    \
  template Tensor<T> im2col(const Tensor<T>&, size_t, size_t, size_t,        \
                            size_t, size_t, size_t);                         \
  template Tensor<T> col2im(const Tensor<T>&, size_t, size_t, size_t,        \
                            size_t, size_t, size_t, size_t, size_t, size_t);

WSNN_INSTANTIATE_OPS(float)
WSNN_INSTANTIATE_OPS(double)

}  // namespace wsnn
