#pragma once

// Inner-loop kernels used by the network and the preprocessing path.
//
// Every kernel exists as a portable scalar reference (reference.hpp) and, where
// the host supports it, an AVX2/FMA variant. The active table is chosen once at
// first use; LESIONTL_SIMD=scalar|avx2 overrides the choice.

#include <cstddef>
#include <span>
#include <string_view>

namespace lesiontl::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Hyper-parameters for a single Adam update. bias_correction{1,2} are
/// 1 - beta^t for the current step t.
struct AdamStep {
  float learning_rate;
  float beta1;
  float beta2;
  float epsilon;
  float bias_correction1;
  float bias_correction2;
};

// Row-major C = alpha * op(A) * op(B) + beta * C, with op(A) m x k and op(B) k x n.
// beta == 0 overwrites C without reading it.
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                        float alpha, const float* a, std::size_t lda, const float* b,
                        std::size_t ldb, float beta, float* c, std::size_t ldc);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  // c[r][j] += bias[r]
  void (*add_bias_rows)(float* c, std::size_t rows, std::size_t cols, const float* bias);
  // c[r][j] += bias[j]
  void (*add_bias_cols)(float* c, std::size_t rows, std::size_t cols, const float* bias);
  void (*relu)(float* x, std::size_t n);
  // grad[i] = out[i] > 0 ? grad[i] : 0
  void (*relu_backward)(float* grad, const float* out, std::size_t n);
  void (*multiply)(float* x, const float* y, std::size_t n);
  // out[r] += sum_j x[r][j]
  void (*sum_rows)(const float* x, std::size_t rows, std::size_t cols, float* out);
  // out[j] += sum_r x[r][j]
  void (*sum_cols)(const float* x, std::size_t rows, std::size_t cols, float* out);
  // velocity = momentum * velocity - lr * g; w += velocity
  void (*sgd_update)(float* w, const float* g, float* velocity, std::size_t n, float lr,
                     float momentum);
  void (*adam_update)(float* w, const float* g, float* m, float* v, std::size_t n,
                      const AdamStep& step);
  // dst[i] = (src[i] / 255 - mean) / stddev
  void (*normalize_pixels)(const float* src, float* dst, std::size_t n, float mean,
                           float stddev);
};

bool supported(Isa isa);

/// Table for a specific ISA. Throws std::runtime_error if the host lacks it.
const KernelTable& table(Isa isa);

/// The table in effect on this thread: a ScopedIsa override if one is live,
/// otherwise the process-wide selection.
const KernelTable& active();

/// Forces a kernel table on the current thread for the guard's lifetime.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  const KernelTable* previous_;
};

/// ISAs usable on this host, scalar first.
std::span<const Isa> available();

}  // namespace lesiontl::simd
