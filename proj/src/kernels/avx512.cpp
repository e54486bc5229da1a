#include <immintrin.h>

#include "wsnn/kernels/kernels.hpp"

// AVX-512 lane. Same shapes as the AVX2 lane scaled to 512-bit registers:
// broadcast GEMM uses a 6x32 block (12 zmm accumulators) and native masking
// for the column tail, NT uses a 2x4 dot block with 16-wide k steps.

namespace wsnn::kernels {
namespace {

template <int MR>
void block32(size_t K, const float* a_base, size_t a_row, size_t a_step,
             const float* b_base, size_t ldb, float alpha, float beta,
             float* c_base, size_t ldc, __mmask16 m0, __mmask16 m1) {
  __m512 acc0[MR], acc1[MR];
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm512_setzero_ps();
    acc1[r] = _mm512_setzero_ps();
  }
  const float* b = b_base;
  for (size_t k = 0; k < K; ++k, b += ldb) {
    const __m512 b0 = _mm512_maskz_loadu_ps(m0, b);
    const __m512 b1 = _mm512_maskz_loadu_ps(m1, b + 16);
    for (int r = 0; r < MR; ++r) {
      const __m512 a = _mm512_set1_ps(a_base[size_t(r) * a_row + k * a_step]);
      acc0[r] = _mm512_fmadd_ps(a, b0, acc0[r]);
      acc1[r] = _mm512_fmadd_ps(a, b1, acc1[r]);
    }
  }
  const __m512 va = _mm512_set1_ps(alpha);
  for (int r = 0; r < MR; ++r) {
    float* c = c_base + size_t(r) * ldc;
    __m512 r0 = _mm512_mul_ps(acc0[r], va);
    __m512 r1 = _mm512_mul_ps(acc1[r], va);
    if (beta != 0.0f) {
      const __m512 vb = _mm512_set1_ps(beta);
      r0 = _mm512_fmadd_ps(vb, _mm512_maskz_loadu_ps(m0, c), r0);
      r1 = _mm512_fmadd_ps(vb, _mm512_maskz_loadu_ps(m1, c + 16), r1);
    }
    _mm512_mask_storeu_ps(c, m0, r0);
    _mm512_mask_storeu_ps(c + 16, m1, r1);
  }
}

using Block32Fn = void (*)(size_t, const float*, size_t, size_t, const float*,
                           size_t, float, float, float*, size_t, __mmask16,
                           __mmask16);
constexpr Block32Fn kBlock32[6] = {&block32<1>, &block32<2>, &block32<3>,
                                   &block32<4>, &block32<5>, &block32<6>};

void gemm_broadcast512(size_t M, size_t N, size_t K, float alpha,
                       const float* A, size_t a_row, size_t a_step,
                       const float* B, size_t ldb, float beta, float* C,
                       size_t ldc) {
  for (size_t i0 = 0; i0 < M; i0 += 6) {
    const int mr = static_cast<int>(M - i0 < 6 ? M - i0 : 6);
    const float* a_base = A + i0 * a_row;
    for (size_t j0 = 0; j0 < N; j0 += 32) {
      const size_t cols = N - j0 < 32 ? N - j0 : 32;
      const __mmask16 m0 =
          cols >= 16 ? __mmask16(0xffff) : __mmask16((1u << cols) - 1);
      const __mmask16 m1 = cols >= 32   ? __mmask16(0xffff)
                           : cols > 16 ? __mmask16((1u << (cols - 16)) - 1)
                                       : __mmask16(0);
      kBlock32[mr - 1](K, a_base, a_row, a_step, B + j0, ldb, alpha, beta,
                       C + i0 * ldc + j0, ldc, m0, m1);
    }
  }
}

void gemm_nn_avx512(size_t M, size_t N, size_t K, float alpha, const float* A,
                    size_t lda, const float* B, size_t ldb, float beta,
                    float* C, size_t ldc) {
  gemm_broadcast512(M, N, K, alpha, A, lda, 1, B, ldb, beta, C, ldc);
}

void gemm_tn_avx512(size_t M, size_t N, size_t K, float alpha, const float* A,
                    size_t lda, const float* B, size_t ldb, float beta,
                    float* C, size_t ldc) {
  gemm_broadcast512(M, N, K, alpha, A, 1, lda, B, ldb, beta, C, ldc);
}

inline float dot512(size_t K, const float* a, const float* b) {
  __m512 acc = _mm512_setzero_ps();
  size_t k = 0;
  for (; k + 16 <= K; k += 16)
    acc = _mm512_fmadd_ps(_mm512_loadu_ps(a + k), _mm512_loadu_ps(b + k), acc);
  if (k < K) {
    const __mmask16 m = __mmask16((1u << (K - k)) - 1);
    acc = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(m, a + k),
                          _mm512_maskz_loadu_ps(m, b + k), acc);
  }
  return _mm512_reduce_add_ps(acc);
}

void gemm_nt_avx512(size_t M, size_t N, size_t K, float alpha, const float* A,
                    size_t lda, const float* B, size_t ldb, float beta,
                    float* C, size_t ldc) {
  const size_t k16 = K / 16 * 16;
  size_t i = 0;
  for (; i + 2 <= M; i += 2) {
    const float* a0 = A + i * lda;
    const float* a1 = a0 + lda;
    size_t j = 0;
    for (; j + 4 <= N; j += 4) {
      __m512 acc[2][4];
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) acc[r][c] = _mm512_setzero_ps();
      for (size_t k = 0; k < k16; k += 16) {
        const __m512 va0 = _mm512_loadu_ps(a0 + k);
        const __m512 va1 = _mm512_loadu_ps(a1 + k);
        for (int c = 0; c < 4; ++c) {
          const __m512 vb = _mm512_loadu_ps(B + (j + c) * ldb + k);
          acc[0][c] = _mm512_fmadd_ps(va0, vb, acc[0][c]);
          acc[1][c] = _mm512_fmadd_ps(va1, vb, acc[1][c]);
        }
      }
      for (int r = 0; r < 2; ++r) {
        const float* a = r == 0 ? a0 : a1;
        for (int c = 0; c < 4; ++c) {
          float v = _mm512_reduce_add_ps(acc[r][c]);
          for (size_t k = k16; k < K; ++k) v += a[k] * B[(j + c) * ldb + k];
          float& dst = C[(i + r) * ldc + j + c];
          dst = alpha * v + (beta == 0.0f ? 0.0f : beta * dst);
        }
      }
    }
    for (; j < N; ++j) {
      for (int r = 0; r < 2; ++r) {
        const float* a = r == 0 ? a0 : a1;
        const float v = dot512(K, a, B + j * ldb);
        float& dst = C[(i + r) * ldc + j];
        dst = alpha * v + (beta == 0.0f ? 0.0f : beta * dst);
      }
    }
  }
  for (; i < M; ++i) {
    for (size_t j = 0; j < N; ++j) {
      const float v = dot512(K, A + i * lda, B + j * ldb);
      float& dst = C[i * ldc + j];
      dst = alpha * v + (beta == 0.0f ? 0.0f : beta * dst);
    }
  }
}

void add_avx512(size_t n, const float* a, const float* b, float* y) {
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_add_ps(_mm512_loadu_ps(a + i),
                                          _mm512_loadu_ps(b + i)));
  if (i < n) {
    const __mmask16 m = __mmask16((1u << (n - i)) - 1);
    _mm512_mask_storeu_ps(y + i, m,
                          _mm512_add_ps(_mm512_maskz_loadu_ps(m, a + i),
                                        _mm512_maskz_loadu_ps(m, b + i)));
  }
}

void sub_avx512(size_t n, const float* a, const float* b, float* y) {
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_sub_ps(_mm512_loadu_ps(a + i),
                                          _mm512_loadu_ps(b + i)));
  if (i < n) {
    const __mmask16 m = __mmask16((1u << (n - i)) - 1);
    _mm512_mask_storeu_ps(y + i, m,
                          _mm512_sub_ps(_mm512_maskz_loadu_ps(m, a + i),
                                        _mm512_maskz_loadu_ps(m, b + i)));
  }
}

void mul_avx512(size_t n, const float* a, const float* b, float* y) {
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_mul_ps(_mm512_loadu_ps(a + i),
                                          _mm512_loadu_ps(b + i)));
  if (i < n) {
    const __mmask16 m = __mmask16((1u << (n - i)) - 1);
    _mm512_mask_storeu_ps(y + i, m,
                          _mm512_mul_ps(_mm512_maskz_loadu_ps(m, a + i),
                                        _mm512_maskz_loadu_ps(m, b + i)));
  }
}

void axpy_avx512(size_t n, float a, const float* x, float* y) {
  const __m512 va = _mm512_set1_ps(a);
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_fmadd_ps(va, _mm512_loadu_ps(x + i),
                                            _mm512_loadu_ps(y + i)));
  if (i < n) {
    const __mmask16 m = __mmask16((1u << (n - i)) - 1);
    _mm512_mask_storeu_ps(y + i, m,
                          _mm512_fmadd_ps(va, _mm512_maskz_loadu_ps(m, x + i),
                                          _mm512_maskz_loadu_ps(m, y + i)));
  }
}

void scale_avx512(size_t n, float a, float* x) {
  const __m512 va = _mm512_set1_ps(a);
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(x + i, _mm512_mul_ps(va, _mm512_loadu_ps(x + i)));
  if (i < n) {
    const __mmask16 m = __mmask16((1u << (n - i)) - 1);
    _mm512_mask_storeu_ps(x + i, m,
                          _mm512_mul_ps(va, _mm512_maskz_loadu_ps(m, x + i)));
  }
}

void relu_fwd_avx512(size_t n, const float* x, float* y) {
  const __m512 zero = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_max_ps(zero, _mm512_loadu_ps(x + i)));
  if (i < n) {
    const __mmask16 m = __mmask16((1u << (n - i)) - 1);
    _mm512_mask_storeu_ps(
        y + i, m, _mm512_max_ps(zero, _mm512_maskz_loadu_ps(m, x + i)));
  }
}

void relu_bwd_avx512(size_t n, const float* x, const float* dy, float* dx) {
  const __m512 zero = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __mmask16 pos =
        _mm512_cmp_ps_mask(_mm512_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm512_storeu_ps(dx + i,
                     _mm512_maskz_mov_ps(pos, _mm512_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

float sum_avx512(size_t n, const float* x) {
  __m512 acc = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    acc = _mm512_add_ps(acc, _mm512_loadu_ps(x + i));
  float v = _mm512_reduce_add_ps(acc);
  for (; i < n; ++i) v += x[i];
  return v;
}

float dot_avx512(size_t n, const float* x, const float* y) {
  __m512 acc = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    acc = _mm512_fmadd_ps(_mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i), acc);
  float v = _mm512_reduce_add_ps(acc);
  for (; i < n; ++i) v += x[i] * y[i];
  return v;
}

bool has_nonfinite_avx512(size_t n, const float* x) {
  const __m512i expo = _mm512_set1_epi32(0x7f800000);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512i bits = _mm512_castps_si512(_mm512_loadu_ps(x + i));
    const __m512i e = _mm512_and_si512(bits, expo);
    if (_mm512_cmpeq_epi32_mask(e, expo) != 0) return true;
  }
  for (; i < n; ++i) {
    if (!std::isfinite(x[i])) return true;
  }
  return false;
}

void adam_step_avx512(size_t n, float* p, const float* g, float* m, float* v,
                      AdamArgs<float> a) {
  const __m512 b1 = _mm512_set1_ps(a.beta1);
  const __m512 c1 = _mm512_set1_ps(1.0f - a.beta1);
  const __m512 b2 = _mm512_set1_ps(a.beta2);
  const __m512 c2 = _mm512_set1_ps(1.0f - a.beta2);
  const __m512 vlr = _mm512_set1_ps(a.lr);
  const __m512 veps = _mm512_set1_ps(a.eps);
  const __m512 vb1 = _mm512_set1_ps(a.bias1);
  const __m512 vb2 = _mm512_set1_ps(a.bias2);
  const __m512 vwd = _mm512_set1_ps(a.wd2);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 pv = _mm512_loadu_ps(p + i);
    const __m512 ge = _mm512_fmadd_ps(vwd, pv, _mm512_loadu_ps(g + i));
    const __m512 mv =
        _mm512_fmadd_ps(b1, _mm512_loadu_ps(m + i), _mm512_mul_ps(c1, ge));
    const __m512 vv = _mm512_fmadd_ps(
        b2, _mm512_loadu_ps(v + i), _mm512_mul_ps(c2, _mm512_mul_ps(ge, ge)));
    _mm512_storeu_ps(m + i, mv);
    _mm512_storeu_ps(v + i, vv);
    const __m512 denom =
        _mm512_add_ps(_mm512_sqrt_ps(_mm512_mul_ps(vv, vb2)), veps);
    const __m512 step =
        _mm512_div_ps(_mm512_mul_ps(vlr, _mm512_mul_ps(mv, vb1)), denom);
    _mm512_storeu_ps(p + i, _mm512_sub_ps(pv, step));
  }
  if (i < n) ref::adam_step(n - i, p + i, g + i, m + i, v + i, a);
}

void sgd_step_avx512(size_t n, float* p, const float* g, float* vel,
                     SgdArgs<float> a) {
  const __m512 vmu = _mm512_set1_ps(a.momentum);
  const __m512 vlr = _mm512_set1_ps(a.lr);
  const __m512 vwd = _mm512_set1_ps(a.wd2);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 pv = _mm512_loadu_ps(p + i);
    const __m512 ge = _mm512_fmadd_ps(vwd, pv, _mm512_loadu_ps(g + i));
    const __m512 nv = _mm512_fmadd_ps(vmu, _mm512_loadu_ps(vel + i), ge);
    _mm512_storeu_ps(vel + i, nv);
    const __m512 step = a.nesterov ? _mm512_fmadd_ps(vmu, nv, ge) : nv;
    _mm512_storeu_ps(p + i, _mm512_fnmadd_ps(vlr, step, pv));
  }
  if (i < n) ref::sgd_step(n - i, p + i, g + i, vel + i, a);
}

}  // namespace

const FloatKernels& avx512_table() {
  static const FloatKernels t = {
      &gemm_nn_avx512, &gemm_nt_avx512, &gemm_tn_avx512,
      &add_avx512,     &sub_avx512,     &mul_avx512,
      &axpy_avx512,    &scale_avx512,   &relu_fwd_avx512,
      &relu_bwd_avx512, &sum_avx512,    &dot_avx512,
      &has_nonfinite_avx512, &adam_step_avx512, &sgd_step_avx512,
  };
  return t;
}

}  // namespace wsnn::kernels
