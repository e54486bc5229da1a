#include "wsnn/wsl.hpp"

#include <algorithm>
#include <numeric>

namespace wsnn::wsl {

namespace {

template <typename T>
void require_score_map(const Tensor<T>& x, const char* who) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(who) + ": expected [BxCxhxw] score map, got " +
                     detail::shape_str(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// MilMaxPool
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> MilMaxPool<T>::forward(const Tensor<T>& x) {
  require_score_map(x, "mil_max_pool");
  const size_t B = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({B, C});
  argmax_ = Tensor<int64_t>({B, C});
  for (size_t p = 0; p < B * C; ++p) {
    const T* plane = x.data() + p * hw;
    size_t best = 0;
    for (size_t i = 1; i < hw; ++i) {
      if (plane[i] > plane[best]) best = i;
    }
    out(p) = plane[best];
    argmax_(p) = static_cast<int64_t>(best);
  }
  in_shape_ = x.shape();
  have_cache_ = true;
  return out;
}

template <typename T>
Tensor<T> MilMaxPool<T>::backward(const Tensor<T>& grad_out) {
  if (!have_cache_) {
    throw Error("mil_max_pool: backward called without forward");
  }
  if (grad_out.shape() != argmax_.shape()) {
    throw ShapeError("mil_max_pool: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  Tensor<T> dx(in_shape_);
  const size_t hw = in_shape_[2] * in_shape_[3];
  for (size_t p = 0; p < grad_out.size(); ++p) {
    dx(p * hw + static_cast<size_t>(argmax_(p))) = grad_out(p);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// WeldonPool
// ---------------------------------------------------------------------------

template <typename T>
WeldonPool<T>::WeldonPool(size_t k) : k_(k) {
  if (k == 0) {
    throw ConfigError("weldon_pool: k must be positive");
  }
}

template <typename T>
Tensor<T> WeldonPool<T>::forward(const Tensor<T>& x) {
  require_score_map(x, "weldon_pool");
  const size_t B = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (2 * k_ > hw) {
    throw ConfigError("weldon_pool: 2k = " + std::to_string(2 * k_) +
                      " exceeds the " + std::to_string(hw) + "-cell map");
  }
  Tensor<T> out({B, C});
  picks_ = Tensor<int64_t>({B, C, 2 * k_});
  std::vector<size_t> order(hw);
  const T inv_k = T(1) / static_cast<T>(k_);
  for (size_t p = 0; p < B * C; ++p) {
    const T* plane = x.data() + p * hw;
    int64_t* picks = picks_.data() + p * 2 * k_;
    T acc = T(0);
    // Highest k: descending by value, lower index first among ties.
    std::iota(order.begin(), order.end(), size_t{0});
    std::partial_sort(order.begin(), order.begin() + k_, order.end(),
                      [&](size_t a, size_t b) {
                        if (plane[a] != plane[b]) return plane[a] > plane[b];
                        return a < b;
                      });
    for (size_t i = 0; i < k_; ++i) {
      acc += plane[order[i]];
      picks[i] = static_cast<int64_t>(order[i]);
    }
    // Lowest k: ascending by value, lower index first among ties.
    std::iota(order.begin(), order.end(), size_t{0});
    std::partial_sort(order.begin(), order.begin() + k_, order.end(),
                      [&](size_t a, size_t b) {
                        if (plane[a] != plane[b]) return plane[a] < plane[b];
                        return a < b;
                      });
    for (size_t i = 0; i < k_; ++i) {
      acc += plane[order[i]];
      picks[k_ + i] = static_cast<int64_t>(order[i]);
    }
    out(p) = acc * inv_k;
  }
  in_shape_ = x.shape();
  have_cache_ = true;
  return out;
}

template <typename T>
Tensor<T> WeldonPool<T>::backward(const Tensor<T>& grad_out) {
  if (!have_cache_) {
    throw Error("weldon_pool: backward called without forward");
  }
  if (grad_out.rank() != 2 || grad_out.dim(0) != in_shape_[0] ||
      grad_out.dim(1) != in_shape_[1]) {
    throw ShapeError("weldon_pool: bad grad shape " +
                     detail::shape_str(grad_out.shape()));
  }
  Tensor<T> dx(in_shape_);
  const size_t hw = in_shape_[2] * in_shape_[3];
  const T inv_k = T(1) / static_cast<T>(k_);
  for (size_t p = 0; p < grad_out.size(); ++p) {
    const T g = grad_out(p) * inv_k;
    const int64_t* picks = picks_.data() + p * 2 * k_;
    for (size_t i = 0; i < 2 * k_; ++i) {
      dx(p * hw + static_cast<size_t>(picks[i])) += g;
    }
  }
  return dx;
}

template class MilMaxPool<float>;
template class MilMaxPool<double>;
template class WeldonPool<float>;
template class WeldonPool<double>;

}  // namespace wsnn::wsl
