// AVX2/FMA kernels. The translation unit is compiled for the baseline target;
// only functions marked LTL_AVX2 use the extended instruction set, so nothing
// here is reachable unless dispatch confirmed host support.

#include "tables.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#define LTL_AVX2 __attribute__((target("avx2,fma")))

namespace lesiontl::simd::detail {
namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 16;
constexpr std::size_t kMc = 144;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 3072;

struct GemmBuffers {
  std::vector<float> a;
  std::vector<float> b;
};

GemmBuffers& buffers() {
  thread_local GemmBuffers buf{std::vector<float>(kMc * kKc), std::vector<float>(kKc * kNc)};
  return buf;
}

// Packs op(A)[i0:i0+mc, p0:p0+kc] into row panels of kMr, zero-padded.
void pack_a(bool trans, const float* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, float* out) {
  for (std::size_t ip = 0; ip < mc; ip += kMr) {
    const std::size_t rows = std::min(kMr, mc - ip);
    if (!trans) {
      for (std::size_t p = 0; p < kc; ++p) {
        float* dst = out + p * kMr;
        std::size_t r = 0;
        for (; r < rows; ++r) dst[r] = a[(i0 + ip + r) * lda + p0 + p];
        for (; r < kMr; ++r) dst[r] = 0.0f;
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = a + (p0 + p) * lda + i0 + ip;
        float* dst = out + p * kMr;
        std::size_t r = 0;
        for (; r < rows; ++r) dst[r] = src[r];
        for (; r < kMr; ++r) dst[r] = 0.0f;
      }
    }
    out += kMr * kc;
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into column panels of kNr, zero-padded.
void pack_b(bool trans, const float* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, float* out) {
  for (std::size_t jp = 0; jp < nc; jp += kNr) {
    const std::size_t cols = std::min(kNr, nc - jp);
    if (!trans) {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = b + (p0 + p) * ldb + j0 + jp;
        float* dst = out + p * kNr;
        if (cols == kNr) {
          std::memcpy(dst, src, kNr * sizeof(float));
        } else {
          std::size_t c = 0;
          for (; c < cols; ++c) dst[c] = src[c];
          for (; c < kNr; ++c) dst[c] = 0.0f;
        }
      }
    } else {
      for (std::size_t c = 0; c < kNr; ++c) {
        if (c < cols) {
          const float* src = b + (j0 + jp + c) * ldb + p0;
          for (std::size_t p = 0; p < kc; ++p) out[p * kNr + c] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) out[p * kNr + c] = 0.0f;
        }
      }
    }
    out += kNr * kc;
  }
}

LTL_AVX2 void micro_kernel(std::size_t kc, const float* a, const float* b, float* c,
                           std::size_t ldc, float alpha, std::size_t mr, std::size_t nr) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();

  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    __m256 av = _mm256_broadcast_ss(a + 0);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a + 1);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a + 2);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a + 3);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
    av = _mm256_broadcast_ss(a + 4);
    c40 = _mm256_fmadd_ps(av, b0, c40);
    c41 = _mm256_fmadd_ps(av, b1, c41);
    av = _mm256_broadcast_ss(a + 5);
    c50 = _mm256_fmadd_ps(av, b0, c50);
    c51 = _mm256_fmadd_ps(av, b1, c51);
    a += kMr;
    b += kNr;
  }

  const __m256 va = _mm256_set1_ps(alpha);
  const __m256 acc[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                              {c30, c31}, {c40, c41}, {c50, c51}};
  if (mr == kMr && nr == kNr) {
    for (std::size_t r = 0; r < kMr; ++r) {
      float* row = c + r * ldc;
      _mm256_storeu_ps(row, _mm256_fmadd_ps(va, acc[r][0], _mm256_loadu_ps(row)));
      _mm256_storeu_ps(row + 8, _mm256_fmadd_ps(va, acc[r][1], _mm256_loadu_ps(row + 8)));
    }
    return;
  }
  alignas(32) float tile[kMr][kNr];
  for (std::size_t r = 0; r < kMr; ++r) {
    _mm256_store_ps(tile[r], _mm256_mul_ps(va, acc[r][0]));
    _mm256_store_ps(tile[r] + 8, _mm256_mul_ps(va, acc[r][1]));
  }
  for (std::size_t r = 0; r < mr; ++r) {
    float* row = c + r * ldc;
    for (std::size_t j = 0; j < nr; ++j) row[j] += tile[r][j];
  }
}

LTL_AVX2 void scale_rows(std::size_t m, std::size_t n, float beta, float* c, std::size_t ldc) {
  const __m256 vb = _mm256_set1_ps(beta);
  for (std::size_t i = 0; i < m; ++i) {
    float* row = c + i * ldc;
    std::size_t j = 0;
    if (beta == 0.0f) {
      for (; j + 8 <= n; j += 8) _mm256_storeu_ps(row + j, _mm256_setzero_ps());
      for (; j < n; ++j) row[j] = 0.0f;
    } else {
      for (; j + 8 <= n; j += 8) _mm256_storeu_ps(row + j, _mm256_mul_ps(vb, _mm256_loadu_ps(row + j)));
      for (; j < n; ++j) row[j] *= beta;
    }
  }
}

LTL_AVX2 void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                   float alpha, const float* a, std::size_t lda, const float* b,
                   std::size_t ldb, float beta, float* c, std::size_t ldc) {
  if (beta != 1.0f) scale_rows(m, n, beta, c, ldc);
  if (m == 0 || n == 0 || k == 0 || alpha == 0.0f) return;

  GemmBuffers& buf = buffers();
  for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
    const std::size_t nc = std::min(kNc, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
      const std::size_t kc = std::min(kKc, k - p0);
      pack_b(trans_b, b, ldb, p0, kc, j0, nc, buf.b.data());
      for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
        const std::size_t mc = std::min(kMc, m - i0);
        pack_a(trans_a, a, lda, i0, mc, p0, kc, buf.a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const std::size_t nr = std::min(kNr, nc - jr);
          const float* bp = buf.b.data() + jr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t mr = std::min(kMr, mc - ir);
            micro_kernel(kc, buf.a.data() + ir * kc, bp, c + (i0 + ir) * ldc + j0 + jr, ldc,
                         alpha, mr, nr);
          }
        }
      }
    }
  }
}

LTL_AVX2 void add_bias_rows(float* c, std::size_t rows, std::size_t cols, const float* bias) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = c + r * cols;
    const __m256 vb = _mm256_set1_ps(bias[r]);
    std::size_t j = 0;
    for (; j + 8 <= cols; j += 8) _mm256_storeu_ps(row + j, _mm256_add_ps(_mm256_loadu_ps(row + j), vb));
    for (; j < cols; ++j) row[j] += bias[r];
  }
}

LTL_AVX2 void add_bias_cols(float* c, std::size_t rows, std::size_t cols, const float* bias) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = c + r * cols;
    std::size_t j = 0;
    for (; j + 8 <= cols; j += 8) {
      _mm256_storeu_ps(row + j, _mm256_add_ps(_mm256_loadu_ps(row + j), _mm256_loadu_ps(bias + j)));
    }
    for (; j < cols; ++j) row[j] += bias[j];
  }
}

LTL_AVX2 void relu(float* x, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    _mm256_storeu_ps(x + i, _mm256_and_ps(v, _mm256_cmp_ps(v, zero, _CMP_NLE_UQ)));
  }
  for (; i < n; ++i) x[i] = x[i] <= 0.0f ? 0.0f : x[i];
}

LTL_AVX2 void relu_backward(float* grad, const float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(out + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(grad + i, _mm256_and_ps(_mm256_loadu_ps(grad + i), mask));
  }
  for (; i < n; ++i) grad[i] = out[i] > 0.0f ? grad[i] : 0.0f;
}

LTL_AVX2 void multiply(float* x, const float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) x[i] *= y[i];
}

LTL_AVX2 float horizontal_sum(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x55));
  return _mm_cvtss_f32(s);
}

LTL_AVX2 void sum_rows(const float* x, std::size_t rows, std::size_t cols, float* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x + r * cols;
    __m256 acc = _mm256_setzero_ps();
    std::size_t j = 0;
    for (; j + 8 <= cols; j += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(row + j));
    float tail = 0.0f;
    for (; j < cols; ++j) tail += row[j];
    out[r] += horizontal_sum(acc) + tail;
  }
}

LTL_AVX2 void sum_cols(const float* x, std::size_t rows, std::size_t cols, float* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x + r * cols;
    std::size_t j = 0;
    for (; j + 8 <= cols; j += 8) {
      _mm256_storeu_ps(out + j, _mm256_add_ps(_mm256_loadu_ps(out + j), _mm256_loadu_ps(row + j)));
    }
    for (; j < cols; ++j) out[j] += row[j];
  }
}

LTL_AVX2 void sgd_update(float* w, const float* g, float* velocity, std::size_t n, float lr,
                         float momentum) {
  const __m256 vm = _mm256_set1_ps(momentum);
  const __m256 vlr = _mm256_set1_ps(lr);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vel = _mm256_sub_ps(_mm256_mul_ps(vm, _mm256_loadu_ps(velocity + i)),
                                     _mm256_mul_ps(vlr, _mm256_loadu_ps(g + i)));
    _mm256_storeu_ps(velocity + i, vel);
    _mm256_storeu_ps(w + i, _mm256_add_ps(_mm256_loadu_ps(w + i), vel));
  }
  for (; i < n; ++i) {
    velocity[i] = momentum * velocity[i] - lr * g[i];
    w[i] += velocity[i];
  }
}

LTL_AVX2 void adam_update(float* w, const float* g, float* m, float* v, std::size_t n,
                          const AdamStep& s) {
  const __m256 b1 = _mm256_set1_ps(s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2);
  const __m256 one_b1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 one_b2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 bc1 = _mm256_set1_ps(s.bias_correction1);
  const __m256 bc2 = _mm256_set1_ps(s.bias_correction2);
  const __m256 lr = _mm256_set1_ps(s.learning_rate);
  const __m256 eps = _mm256_set1_ps(s.epsilon);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gi = _mm256_loadu_ps(g + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(one_b1, gi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(one_b2, _mm256_mul_ps(gi, gi)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_div_ps(mi, bc1);
    const __m256 vhat = _mm256_div_ps(vi, bc2);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, mhat), _mm256_add_ps(_mm256_sqrt_ps(vhat), eps));
    _mm256_storeu_ps(w + i, _mm256_sub_ps(_mm256_loadu_ps(w + i), step));
  }
  for (; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * (g[i] * g[i]);
    const float mhat = m[i] / s.bias_correction1;
    const float vhat = v[i] / s.bias_correction2;
    w[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

LTL_AVX2 void normalize_pixels(const float* src, float* dst, std::size_t n, float mean,
                               float stddev) {
  const __m256 v255 = _mm256_set1_ps(255.0f);
  const __m256 vm = _mm256_set1_ps(mean);
  const __m256 vs = _mm256_set1_ps(stddev);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 x = _mm256_div_ps(_mm256_loadu_ps(src + i), v255);
    _mm256_storeu_ps(dst + i, _mm256_div_ps(_mm256_sub_ps(x, vm), vs));
  }
  for (; i < n; ++i) dst[i] = (src[i] / 255.0f - mean) / stddev;
}

constexpr KernelTable kAvx2{
    Isa::avx2,     &gemm,       &add_bias_rows, &add_bias_cols, &relu,
    &relu_backward, &multiply,  &sum_rows,      &sum_cols,      &sgd_update,
    &adam_update,  &normalize_pixels,
};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace lesiontl::simd::detail

#else

namespace lesiontl::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace lesiontl::simd::detail

#endif
