#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#include "wsnn/errors.hpp"
#include "wsnn/kernels/kernels.hpp"

namespace wsnn {

namespace detail {

// 64-byte aligned allocator so kernel lanes can assume cacheline-aligned
// buffers (they tolerate unaligned, alignment just keeps splits rare).
template <typename T>
struct AlignedAlloc {
  using value_type = T;
  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}
  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
  }
  void deallocate(T* p, size_t) { ::operator delete(p, std::align_val_t(64)); }
  bool operator==(const AlignedAlloc&) const { return true; }
  bool operator!=(const AlignedAlloc&) const { return false; }
};

inline size_t shape_size(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<size_t>& shape);

}  // namespace detail

// Dense row-major n-dimensional array with value semantics. There are no
// views: copies copy, moves steal, and reshape on an rvalue is free. A rank-0
// tensor holds exactly one element.
template <typename T>
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, T(0)) {}

  explicit Tensor(std::vector<size_t> shape)
      : shape_(std::move(shape)), data_(detail::shape_size(shape_), T(0)) {}

  static Tensor zeros(std::vector<size_t> shape) {
    return Tensor(std::move(shape));
  }

  static Tensor full(std::vector<size_t> shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor from(std::vector<size_t> shape, std::vector<T> values) {
    Tensor t(std::move(shape));
    if (values.size() != t.size()) {
      throw ShapeError("from(): " + std::to_string(values.size()) +
                       " values for shape " + detail::shape_str(t.shape_));
    }
    for (size_t i = 0; i < values.size(); ++i) t.data_[i] = values[i];
    return t;
  }

  size_t rank() const { return shape_.size(); }
  const std::vector<size_t>& shape() const { return shape_; }
  size_t dim(size_t i) const {
    if (i >= shape_.size()) {
      throw ShapeError("dim(" + std::to_string(i) + ") on rank-" +
                       std::to_string(shape_.size()) + " tensor");
    }
    return shape_[i];
  }
  size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  // Unchecked element access (row-major).
  T& operator()(size_t i) { return data_[i]; }
  const T& operator()(size_t i) const { return data_[i]; }
  T& operator()(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(size_t i, size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T& operator()(size_t i, size_t j, size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(size_t i, size_t j, size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  T& operator()(size_t i, size_t j, size_t k, size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& operator()(size_t i, size_t j, size_t k, size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }
  void zero() { fill(T(0)); }

  // Same data, new shape; element count must match. Copies on lvalues, steals
  // the buffer on rvalues.
  Tensor reshaped(std::vector<size_t> new_shape) const& {
    Tensor copy(*this);
    return std::move(copy).reshaped(std::move(new_shape));
  }
  Tensor reshaped(std::vector<size_t> new_shape) && {
    if (detail::shape_size(new_shape) != size()) {
      throw ShapeError("reshape " + detail::shape_str(shape_) + " -> " +
                       detail::shape_str(new_shape) + ": element count differs");
    }
    shape_ = std::move(new_shape);
    return std::move(*this);
  }

  // Explicit dtype conversion (the only way to change element type).
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    const T* src = data();
    U* dst = out.data();
    for (size_t i = 0; i < size(); ++i) dst[i] = static_cast<U>(src[i]);
    return out;
  }

  bool all_finite() const {
    if constexpr (std::is_floating_point_v<T>) {
      return !kernels::has_nonfinite(size(), data());
    } else {
      return true;
    }
  }

  void require_finite(const char* what) const {
    if (!all_finite()) {
      throw NumericError(std::string(what) + ": non-finite value in tensor " +
                         detail::shape_str(shape_));
    }
  }

 private:
  std::vector<size_t> shape_;
  std::vector<T, detail::AlignedAlloc<T>> data_;
};

// Result of reduce_max_with_index: per output element the maximum value and
// the flat row-major index of the first maximum within its reduced block.
template <typename T>
struct MaxReduceResult {
  Tensor<T> values;
  Tensor<int64_t> indices;
};

// ---------------------------------------------------------------------------
// checked public ops (non-finite results throw NumericError)
// ---------------------------------------------------------------------------

// [MxK] x [KxN] -> [MxN]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add(const Tensor<T>& a, T scalar);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, T scalar);

// Reduce max over the given axes (duplicates rejected). Scanning is row-major
// so ties resolve to the first occurrence; indices are flat positions within
// each reduced block. Reducing every axis yields a rank-0 tensor.
template <typename T>
MaxReduceResult<T> reduce_max_with_index(const Tensor<T>& x,
                                         std::vector<size_t> axes);

// Patch extraction for convolution: x[CxHxW] -> col[(C*kh*kw) x (Ho*Wo)].
// Output extents must divide exactly: (H + 2*pad_h - kh) % stride_h == 0 and
// the result must be positive, otherwise ShapeError.
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, size_t kh, size_t kw, size_t stride_h,
                 size_t stride_w, size_t pad_h, size_t pad_w);

// Adjoint of im2col: scatter-accumulate columns back into [CxHxW].
template <typename T>
Tensor<T> col2im(const Tensor<T>& col, size_t channels, size_t height,
                 size_t width, size_t kh, size_t kw, size_t stride_h,
                 size_t stride_w, size_t pad_h, size_t pad_w);

namespace detail {

// Unchecked pointer forms shared by the checked ops and the conv layer hot
// path (which validates geometry once at construction).
struct ConvGeom {
  size_t channels, height, width;
  size_t kh, kw, stride_h, stride_w, pad_h, pad_w;
  size_t out_h, out_w;

  static ConvGeom make(size_t c, size_t h, size_t w, size_t kh, size_t kw,
                       size_t sh, size_t sw, size_t ph, size_t pw);
  size_t rows() const { return channels * kh * kw; }
  size_t cols() const { return out_h * out_w; }
};

template <typename T>
void im2col_ptr(const ConvGeom& g, const T* x, T* col);
template <typename T>
void col2im_ptr(const ConvGeom& g, const T* col, T* x);

// Packed variants touching only the output positions listed in col_ids
// (ascending, each < g.cols()); the packed matrix is [rows() x ncols].
// col2im_cols accumulates into x, which the caller must have zeroed.
template <typename T>
void im2col_cols(const ConvGeom& g, const T* x, const size_t* col_ids,
                 size_t ncols, T* out);
template <typename T>
void col2im_cols(const ConvGeom& g, const T* col, const size_t* col_ids,
                 size_t ncols, T* x);

}  // namespace detail

}  // namespace wsnn
