#pragma once

// Scalar reference kernels, templated on the element type. The float
// instantiations back the scalar dispatch table; the double instantiations are
// what the double-precision network (used for gradient checking) runs on.

#include <cmath>
#include <cstddef>

namespace lesiontl::simd::ref {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
          std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      for (std::size_t j = 0; j < n; ++j) row[j] = T(0);
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0) return;

  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      T* row = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = alpha * a[i * lda + p];
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * ldb;
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        c[i * ldc + j] += alpha * acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* arow = a + p * lda;
      const T* brow = b + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const T api = alpha * arow[i];
        T* row = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) row[j] += api * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) acc += a[p * lda + i] * b[j * ldb + p];
        c[i * ldc + j] += alpha * acc;
      }
    }
  }
}

template <typename T>
void add_bias_rows(T* c, std::size_t rows, std::size_t cols, const T* bias) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = c + r * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += bias[r];
  }
}

template <typename T>
void add_bias_cols(T* c, std::size_t rows, std::size_t cols, const T* bias) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = c + r * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += bias[j];
  }
}

template <typename T>
void relu(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] <= T(0) ? T(0) : x[i];  // NaN passes through
}

template <typename T>
void relu_backward(T* grad, const T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) grad[i] = out[i] > T(0) ? grad[i] : T(0);
}

template <typename T>
void multiply(T* x, const T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= y[i];
}

template <typename T>
void sum_rows(const T* x, std::size_t rows, std::size_t cols, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = T(0);
    const T* row = x + r * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j];
    out[r] += acc;
  }
}

template <typename T>
void sum_cols(const T* x, std::size_t rows, std::size_t cols, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x + r * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += row[j];
  }
}

template <typename T>
void sgd_update(T* w, const T* g, T* velocity, std::size_t n, T lr, T momentum) {
  for (std::size_t i = 0; i < n; ++i) {
    velocity[i] = momentum * velocity[i] - lr * g[i];
    w[i] += velocity[i];
  }
}

template <typename T>
void adam_update(T* w, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps,
                 T bc1, T bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * (g[i] * g[i]);
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
void normalize_pixels(const T* src, T* dst, std::size_t n, T mean, T stddev) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] / T(255) - mean) / stddev;
}

}  // namespace lesiontl::simd::ref
