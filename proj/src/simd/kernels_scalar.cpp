#include "lesiontl/simd/reference.hpp"
#include "tables.hpp"

namespace lesiontl::simd::detail {
namespace {

void adam_update(float* w, const float* g, float* m, float* v, std::size_t n,
                 const AdamStep& s) {
  ref::adam_update<float>(w, g, m, v, n, s.learning_rate, s.beta1, s.beta2, s.epsilon,
                          s.bias_correction1, s.bias_correction2);
}

constexpr KernelTable kScalar{
    Isa::scalar,
    &ref::gemm<float>,
    &ref::add_bias_rows<float>,
    &ref::add_bias_cols<float>,
    &ref::relu<float>,
    &ref::relu_backward<float>,
    &ref::multiply<float>,
    &ref::sum_rows<float>,
    &ref::sum_cols<float>,
    &ref::sgd_update<float>,
    &adam_update,
    &ref::normalize_pixels<float>,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace lesiontl::simd::detail
