#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>

// Flat-array compute primitives. Everything here works on raw pointers so the
// same code serves tensors, parameter blocks and scratch buffers.
//
// Two lanes exist for float:
//   * kernels::ref — scalar reference templates (any arithmetic type). These
//     define the semantics; SIMD lanes must match them within tolerance.
//   * a dispatch table of float fast paths (scalar / AVX2 / AVX-512) chosen
//     at startup from cpuid, overridable via select().
// Double (used by gradient checking) always runs the reference lane.

namespace wsnn::kernels {

enum class Isa { scalar = 0, avx2 = 1, avx512 = 2 };

const char* isa_name(Isa isa);
bool cpu_supports(Isa isa);
Isa detect_best();
Isa active();
// Switch the float fast-path lane. Throws ConfigError if the CPU lacks it.
void select(Isa isa);
// Parse "auto" | "scalar" | "avx2" | "avx512" (ConfigError otherwise).
Isa parse_isa(const std::string& text);

template <typename T>
struct AdamArgs {
  T lr;     // schedule rate x group multiplier
  T beta1;
  T beta2;
  T eps;
  T bias1;  // 1 / (1 - beta1^t)
  T bias2;  // 1 / (1 - beta2^t)
  T wd2;    // 2 x weight_decay (d/dw of wd * sum w^2)
};

template <typename T>
struct SgdArgs {
  T lr;
  T momentum;
  T wd2;
  bool nesterov;
};

// ---------------------------------------------------------------------------
// scalar reference lane
// ---------------------------------------------------------------------------
namespace ref {

// C[MxN] = alpha * A[MxK] * B[KxN] + beta * C
template <typename T>
void gemm_nn(size_t M, size_t N, size_t K, T alpha, const T* A, size_t lda,
             const T* B, size_t ldb, T beta, T* C, size_t ldc) {
  for (size_t i = 0; i < M; ++i) {
    T* c = C + i * ldc;
    if (beta == T(0)) {
      for (size_t j = 0; j < N; ++j) c[j] = T(0);
    } else if (beta != T(1)) {
      for (size_t j = 0; j < N; ++j) c[j] *= beta;
    }
    for (size_t k = 0; k < K; ++k) {
      const T a = alpha * A[i * lda + k];
      const T* b = B + k * ldb;
      for (size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

// C[MxN] = alpha * A[MxK] * B[NxK]^T + beta * C
template <typename T>
void gemm_nt(size_t M, size_t N, size_t K, T alpha, const T* A, size_t lda,
             const T* B, size_t ldb, T beta, T* C, size_t ldc) {
  for (size_t i = 0; i < M; ++i) {
    const T* a = A + i * lda;
    for (size_t j = 0; j < N; ++j) {
      const T* b = B + j * ldb;
      T acc = T(0);
      for (size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      T& c = C[i * ldc + j];
      c = alpha * acc + (beta == T(0) ? T(0) : beta * c);
    }
  }
}

// C[MxN] = alpha * A[KxM]^T * B[KxN] + beta * C
template <typename T>
void gemm_tn(size_t M, size_t N, size_t K, T alpha, const T* A, size_t lda,
             const T* B, size_t ldb, T beta, T* C, size_t ldc) {
  for (size_t i = 0; i < M; ++i) {
    T* c = C + i * ldc;
    if (beta == T(0)) {
      for (size_t j = 0; j < N; ++j) c[j] = T(0);
    } else if (beta != T(1)) {
      for (size_t j = 0; j < N; ++j) c[j] *= beta;
    }
    for (size_t k = 0; k < K; ++k) {
      const T a = alpha * A[k * lda + i];
      const T* b = B + k * ldb;
      for (size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void add(size_t n, const T* a, const T* b, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void sub(size_t n, const T* a, const T* b, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void mul(size_t n, const T* a, const T* b, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

// y += a * x
template <typename T>
void axpy(size_t n, T a, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale(size_t n, T a, T* x) {
  for (size_t i = 0; i < n; ++i) x[i] *= a;
}

template <typename T>
void relu_fwd(size_t n, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// dx = dy where x > 0 else 0 (mask taken from the forward input)
template <typename T>
void relu_bwd(size_t n, const T* x, const T* dy, T* dx) {
  for (size_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
T sum(size_t n, const T* x) {
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T dot(size_t n, const T* x, const T* y) {
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
bool has_nonfinite(size_t n, const T* x) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return true;
  }
  return false;
}

template <typename T>
void adam_step(size_t n, T* p, const T* g, T* m, T* v, AdamArgs<T> args) {
  for (size_t i = 0; i < n; ++i) {
    const T ge = g[i] + args.wd2 * p[i];
    m[i] = args.beta1 * m[i] + (T(1) - args.beta1) * ge;
    v[i] = args.beta2 * v[i] + (T(1) - args.beta2) * ge * ge;
    const T mhat = m[i] * args.bias1;
    const T vhat = v[i] * args.bias2;
    p[i] -= args.lr * mhat / (std::sqrt(vhat) + args.eps);
  }
}

template <typename T>
void sgd_step(size_t n, T* p, const T* g, T* vel, SgdArgs<T> args) {
  for (size_t i = 0; i < n; ++i) {
    const T ge = g[i] + args.wd2 * p[i];
    vel[i] = args.momentum * vel[i] + ge;
    const T step = args.nesterov ? ge + args.momentum * vel[i] : vel[i];
    p[i] -= args.lr * step;
  }
}

}  // namespace ref

// ---------------------------------------------------------------------------
// float fast-path dispatch
// ---------------------------------------------------------------------------
struct FloatKernels {
  void (*gemm_nn)(size_t, size_t, size_t, float, const float*, size_t,
                  const float*, size_t, float, float*, size_t);
  void (*gemm_nt)(size_t, size_t, size_t, float, const float*, size_t,
                  const float*, size_t, float, float*, size_t);
  void (*gemm_tn)(size_t, size_t, size_t, float, const float*, size_t,
                  const float*, size_t, float, float*, size_t);
  void (*add)(size_t, const float*, const float*, float*);
  void (*sub)(size_t, const float*, const float*, float*);
  void (*mul)(size_t, const float*, const float*, float*);
  void (*axpy)(size_t, float, const float*, float*);
  void (*scale)(size_t, float, float*);
  void (*relu_fwd)(size_t, const float*, float*);
  void (*relu_bwd)(size_t, const float*, const float*, float*);
  float (*sum)(size_t, const float*);
  float (*dot)(size_t, const float*, const float*);
  bool (*has_nonfinite)(size_t, const float*);
  void (*adam_step)(size_t, float*, const float*, float*, float*,
                    AdamArgs<float>);
  void (*sgd_step)(size_t, float*, const float*, float*, SgdArgs<float>);
};

// Table for one specific lane (for equivalence tests); throws ConfigError if
// the CPU cannot run it.
const FloatKernels& table_for(Isa isa);
// Table for the currently selected lane.
const FloatKernels& table();

// ---------------------------------------------------------------------------
// typed entry points used by the library: float goes through the dispatch
// table, every other type through the reference lane
// ---------------------------------------------------------------------------
template <typename T>
void gemm_nn(size_t M, size_t N, size_t K, T alpha, const T* A, size_t lda,
             const T* B, size_t ldb, T beta, T* C, size_t ldc) {
  if constexpr (std::is_same_v<T, float>) {
    table().gemm_nn(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  } else {
    ref::gemm_nn(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  }
}

template <typename T>
void gemm_nt(size_t M, size_t N, size_t K, T alpha, const T* A, size_t lda,
             const T* B, size_t ldb, T beta, T* C, size_t ldc) {
  if constexpr (std::is_same_v<T, float>) {
    table().gemm_nt(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  } else {
    ref::gemm_nt(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  }
}

template <typename T>
void gemm_tn(size_t M, size_t N, size_t K, T alpha, const T* A, size_t lda,
             const T* B, size_t ldb, T beta, T* C, size_t ldc) {
  if constexpr (std::is_same_v<T, float>) {
    table().gemm_tn(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  } else {
    ref::gemm_tn(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  }
}

template <typename T>
void add(size_t n, const T* a, const T* b, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    table().add(n, a, b, y);
  } else {
    ref::add(n, a, b, y);
  }
}

template <typename T>
void sub(size_t n, const T* a, const T* b, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    table().sub(n, a, b, y);
  } else {
    ref::sub(n, a, b, y);
  }
}

template <typename T>
void mul(size_t n, const T* a, const T* b, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    table().mul(n, a, b, y);
  } else {
    ref::mul(n, a, b, y);
  }
}

template <typename T>
void axpy(size_t n, T a, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    table().axpy(n, a, x, y);
  } else {
    ref::axpy(n, a, x, y);
  }
}

template <typename T>
void scale(size_t n, T a, T* x) {
  if constexpr (std::is_same_v<T, float>) {
    table().scale(n, a, x);
  } else {
    ref::scale(n, a, x);
  }
}

template <typename T>
void relu_fwd(size_t n, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>) {
    table().relu_fwd(n, x, y);
  } else {
    ref::relu_fwd(n, x, y);
  }
}

template <typename T>
void relu_bwd(size_t n, const T* x, const T* dy, T* dx) {
  if constexpr (std::is_same_v<T, float>) {
    table().relu_bwd(n, x, dy, dx);
  } else {
    ref::relu_bwd(n, x, dy, dx);
  }
}

template <typename T>
T sum(size_t n, const T* x) {
  if constexpr (std::is_same_v<T, float>) {
    return table().sum(n, x);
  } else {
    return ref::sum(n, x);
  }
}

template <typename T>
T dot(size_t n, const T* x, const T* y) {
  if constexpr (std::is_same_v<T, float>) {
    return table().dot(n, x, y);
  } else {
    return ref::dot(n, x, y);
  }
}

template <typename T>
bool has_nonfinite(size_t n, const T* x) {
  if constexpr (std::is_same_v<T, float>) {
    return table().has_nonfinite(n, x);
  } else {
    return ref::has_nonfinite(n, x);
  }
}

template <typename T>
void adam_step(size_t n, T* p, const T* g, T* m, T* v, AdamArgs<T> args) {
  if constexpr (std::is_same_v<T, float>) {
    table().adam_step(n, p, g, m, v, args);
  } else {
    ref::adam_step(n, p, g, m, v, args);
  }
}

template <typename T>
void sgd_step(size_t n, T* p, const T* g, T* vel, SgdArgs<T> args) {
  if constexpr (std::is_same_v<T, float>) {
    table().sgd_step(n, p, g, vel, args);
  } else {
    ref::sgd_step(n, p, g, vel, args);
  }
}

}  // namespace wsnn::kernels
