#include <immintrin.h>

#include "wsnn/kernels/kernels.hpp"

// AVX2+FMA lane. GEMM uses a 6x16 register block (12 ymm accumulators) with
// A broadcast against two B vectors per k step; the NT variant uses a 2x4
// dot block with k vectorized instead, which is the cache-friendly shape when
// the reduction dimension is the contiguous one. Column/row remainders fall
// back to the scalar reference on the leftover strip -- the strips are thin,
// so the fallback cost is noise.

namespace wsnn::kernels {
namespace {

inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

// C strip starting at c_base: MR rows x 16 columns. a_step/a_row describe how
// A is walked so the same kernel serves NN (row-major rows) and TN
// (column-major rows): element for row r at step k sits at a_base[r*a_row +
// k*a_step].
template <int MR>
void block16(size_t K, const float* a_base, size_t a_row, size_t a_step,
             const float* b_base, size_t ldb, float alpha, float beta,
             float* c_base, size_t ldc) {
  __m256 acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm256_setzero_ps();
    acc1[r] = _mm256_setzero_ps();
  }
  const float* b = b_base;
  for (size_t k = 0; k < K; ++k, b += ldb) {
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    for (int r = 0; r < MR; ++r) {
      const __m256 a = _mm256_set1_ps(a_base[size_t(r) * a_row + k * a_step]);
      acc0[r] = _mm256_fmadd_ps(a, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(a, b1, acc1[r]);
    }
  }
  const __m256 va = _mm256_set1_ps(alpha);
  for (int r = 0; r < MR; ++r) {
    float* c = c_base + size_t(r) * ldc;
    __m256 r0 = _mm256_mul_ps(acc0[r], va);
    __m256 r1 = _mm256_mul_ps(acc1[r], va);
    if (beta != 0.0f) {
      const __m256 vb = _mm256_set1_ps(beta);
      r0 = _mm256_fmadd_ps(vb, _mm256_loadu_ps(c), r0);
      r1 = _mm256_fmadd_ps(vb, _mm256_loadu_ps(c + 8), r1);
    }
    _mm256_storeu_ps(c, r0);
    _mm256_storeu_ps(c + 8, r1);
  }
}

using Block16Fn = void (*)(size_t, const float*, size_t, size_t, const float*,
                           size_t, float, float, float*, size_t);
constexpr Block16Fn kBlock16[6] = {&block16<1>, &block16<2>, &block16<3>,
                                   &block16<4>, &block16<5>, &block16<6>};

// Shared panel walk for NN and TN. For NN: a_row = lda, a_step = 1.
// For TN (A stored KxM): a_row = 1, a_step = lda.
void gemm_broadcast(size_t M, size_t N, size_t K, float alpha, const float* A,
                    size_t a_row, size_t a_step, const float* B, size_t ldb,
                    float beta, float* C, size_t ldc) {
  const size_t n16 = N / 16 * 16;
  for (size_t i0 = 0; i0 < M; i0 += 6) {
    const int mr = static_cast<int>(M - i0 < 6 ? M - i0 : 6);
    const float* a_base = A + i0 * a_row;
    for (size_t j0 = 0; j0 < n16; j0 += 16) {
      kBlock16[mr - 1](K, a_base, a_row, a_step, B + j0, ldb, alpha, beta,
                       C + i0 * ldc + j0, ldc);
    }
  }
  if (n16 < N) {
    // leftover column strip, scalar
    for (size_t i = 0; i < M; ++i) {
      float* c = C + i * ldc;
      for (size_t j = n16; j < N; ++j) {
        float acc = 0.0f;
        for (size_t k = 0; k < K; ++k) {
          acc += A[i * a_row + k * a_step] * B[k * ldb + j];
        }
        c[j] = alpha * acc + (beta == 0.0f ? 0.0f : beta * c[j]);
      }
    }
  }
}

void gemm_nn_avx2(size_t M, size_t N, size_t K, float alpha, const float* A,
                  size_t lda, const float* B, size_t ldb, float beta, float* C,
                  size_t ldc) {
  gemm_broadcast(M, N, K, alpha, A, lda, 1, B, ldb, beta, C, ldc);
}

void gemm_tn_avx2(size_t M, size_t N, size_t K, float alpha, const float* A,
                  size_t lda, const float* B, size_t ldb, float beta, float* C,
                  size_t ldc) {
  gemm_broadcast(M, N, K, alpha, A, 1, lda, B, ldb, beta, C, ldc);
}

// NT: C[i,j] = dot(A row i, B row j). 2 rows x 4 columns of k-vectorized
// accumulators.
void gemm_nt_avx2(size_t M, size_t N, size_t K, float alpha, const float* A,
                  size_t lda, const float* B, size_t ldb, float beta, float* C,
                  size_t ldc) {
  const size_t k8 = K / 8 * 8;
  size_t i = 0;
  for (; i + 2 <= M; i += 2) {
    const float* a0 = A + i * lda;
    const float* a1 = a0 + lda;
    size_t j = 0;
    for (; j + 4 <= N; j += 4) {
      __m256 acc[2][4];
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) acc[r][c] = _mm256_setzero_ps();
      for (size_t k = 0; k < k8; k += 8) {
        const __m256 va0 = _mm256_loadu_ps(a0 + k);
        const __m256 va1 = _mm256_loadu_ps(a1 + k);
        for (int c = 0; c < 4; ++c) {
          const __m256 vb = _mm256_loadu_ps(B + (j + c) * ldb + k);
          acc[0][c] = _mm256_fmadd_ps(va0, vb, acc[0][c]);
          acc[1][c] = _mm256_fmadd_ps(va1, vb, acc[1][c]);
        }
      }
      for (int r = 0; r < 2; ++r) {
        const float* a = r == 0 ? a0 : a1;
        for (int c = 0; c < 4; ++c) {
          float v = hsum8(acc[r][c]);
          for (size_t k = k8; k < K; ++k) v += a[k] * B[(j + c) * ldb + k];
          float& dst = C[(i + r) * ldc + j + c];
          dst = alpha * v + (beta == 0.0f ? 0.0f : beta * dst);
        }
      }
    }
    for (; j < N; ++j) {
      for (int r = 0; r < 2; ++r) {
        const float* a = r == 0 ? a0 : a1;
        const float* b = B + j * ldb;
        __m256 acc = _mm256_setzero_ps();
        for (size_t k = 0; k < k8; k += 8)
          acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k),
                                acc);
        float v = hsum8(acc);
        for (size_t k = k8; k < K; ++k) v += a[k] * b[k];
        float& dst = C[(i + r) * ldc + j];
        dst = alpha * v + (beta == 0.0f ? 0.0f : beta * dst);
      }
    }
  }
  for (; i < M; ++i) {
    const float* a = A + i * lda;
    for (size_t j = 0; j < N; ++j) {
      const float* b = B + j * ldb;
      __m256 acc = _mm256_setzero_ps();
      for (size_t k = 0; k < k8; k += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k),
                              acc);
      float v = hsum8(acc);
      for (size_t k = k8; k < K; ++k) v += a[k] * b[k];
      float& dst = C[i * ldc + j];
      dst = alpha * v + (beta == 0.0f ? 0.0f : beta * dst);
    }
  }
}

void add_avx2(size_t n, const float* a, const float* b, float* y) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_avx2(size_t n, const float* a, const float* b, float* y) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_avx2(size_t n, const float* a, const float* b, float* y) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy_avx2(size_t n, float a, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                               _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(size_t n, float a, float* x) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void relu_fwd_avx2(size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx2(size_t n, const float* x, const float* dy, float* dx) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

float sum_avx2(size_t n, const float* x) {
  __m256 acc = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float v = hsum8(acc);
  for (; i < n; ++i) v += x[i];
  return v;
}

float dot_avx2(size_t n, const float* x, const float* y) {
  __m256 acc = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  float v = hsum8(acc);
  for (; i < n; ++i) v += x[i] * y[i];
  return v;
}

bool has_nonfinite_avx2(size_t n, const float* x) {
  // finite iff the exponent field is not all ones
  const __m256i expo = _mm256_set1_epi32(0x7f800000);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i bits = _mm256_castps_si256(_mm256_loadu_ps(x + i));
    const __m256i e = _mm256_and_si256(bits, expo);
    if (_mm256_movemask_epi8(_mm256_cmpeq_epi32(e, expo)) != 0) return true;
  }
  for (; i < n; ++i) {
    if (!std::isfinite(x[i])) return true;
  }
  return false;
}

void adam_step_avx2(size_t n, float* p, const float* g, float* m, float* v,
                    AdamArgs<float> a) {
  const __m256 b1 = _mm256_set1_ps(a.beta1);
  const __m256 c1 = _mm256_set1_ps(1.0f - a.beta1);
  const __m256 b2 = _mm256_set1_ps(a.beta2);
  const __m256 c2 = _mm256_set1_ps(1.0f - a.beta2);
  const __m256 vlr = _mm256_set1_ps(a.lr);
  const __m256 veps = _mm256_set1_ps(a.eps);
  const __m256 vb1 = _mm256_set1_ps(a.bias1);
  const __m256 vb2 = _mm256_set1_ps(a.bias2);
  const __m256 vwd = _mm256_set1_ps(a.wd2);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 pv = _mm256_loadu_ps(p + i);
    const __m256 ge = _mm256_fmadd_ps(vwd, pv, _mm256_loadu_ps(g + i));
    const __m256 mv =
        _mm256_fmadd_ps(b1, _mm256_loadu_ps(m + i), _mm256_mul_ps(c1, ge));
    const __m256 vv = _mm256_fmadd_ps(
        b2, _mm256_loadu_ps(v + i), _mm256_mul_ps(c2, _mm256_mul_ps(ge, ge)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(mv, vb1);
    const __m256 vhat = _mm256_mul_ps(vv, vb2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, step));
  }
  if (i < n) ref::adam_step(n - i, p + i, g + i, m + i, v + i, a);
}

void sgd_step_avx2(size_t n, float* p, const float* g, float* vel,
                   SgdArgs<float> a) {
  const __m256 vmu = _mm256_set1_ps(a.momentum);
  const __m256 vlr = _mm256_set1_ps(a.lr);
  const __m256 vwd = _mm256_set1_ps(a.wd2);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 pv = _mm256_loadu_ps(p + i);
    const __m256 ge = _mm256_fmadd_ps(vwd, pv, _mm256_loadu_ps(g + i));
    const __m256 nv = _mm256_fmadd_ps(vmu, _mm256_loadu_ps(vel + i), ge);
    _mm256_storeu_ps(vel + i, nv);
    const __m256 step =
        a.nesterov ? _mm256_fmadd_ps(vmu, nv, ge) : nv;
    _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(vlr, step, pv));
  }
  if (i < n) ref::sgd_step(n - i, p + i, g + i, vel + i, a);
}

}  // namespace

const FloatKernels& avx2_table() {
  static const FloatKernels t = {
      &gemm_nn_avx2, &gemm_nt_avx2, &gemm_tn_avx2,
      &add_avx2,     &sub_avx2,     &mul_avx2,
      &axpy_avx2,    &scale_avx2,   &relu_fwd_avx2,
      &relu_bwd_avx2, &sum_avx2,    &dot_avx2,
      &has_nonfinite_avx2, &adam_step_avx2, &sgd_step_avx2,
  };
  return t;
}

}  // namespace wsnn::kernels
