#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lesiontl/simd/kernels.hpp"
#include "lesiontl/simd/reference.hpp"

namespace lesiontl::nn {

/// Per-sample feature shape, channel-major. Flat vectors use {n, 1, 1}.
struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  bool flat() const { return height == 1 && width == 1; }
  std::string to_string() const {
    if (flat()) return std::to_string(channels);
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

/// A batch of samples laid out [batch][channels][height][width].
template <typename T>
struct Tensor {
  std::size_t batch = 0;
  FeatureShape shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t n, FeatureShape s) : batch(n), shape(s), data(n * s.size(), T(0)) {}

  void reshape(std::size_t n, FeatureShape s) {
    batch = n;
    shape = s;
    data.resize(n * s.size());
  }
  std::size_t sample_size() const { return shape.size(); }
  T* sample(std::size_t n) { return data.data() + n * shape.size(); }
  const T* sample(std::size_t n) const { return data.data() + n * shape.size(); }
};

/// A learnable array. `grad` is only allocated while the owning layer trains.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<T> value;
  std::vector<T> grad;
};

enum class Mode { train, eval };

/// Element-type dispatch: float goes through the active SIMD table, double
/// through the scalar reference.
template <typename T>
struct Ops;

template <>
struct Ops<float> {
  static void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
                   const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta,
                   float* c, std::size_t ldc) {
    simd::active().gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
  static void add_bias_rows(float* c, std::size_t r, std::size_t n, const float* b) {
    simd::active().add_bias_rows(c, r, n, b);
  }
  static void add_bias_cols(float* c, std::size_t r, std::size_t n, const float* b) {
    simd::active().add_bias_cols(c, r, n, b);
  }
  static void relu(float* x, std::size_t n) { simd::active().relu(x, n); }
  static void relu_backward(float* g, const float* o, std::size_t n) { simd::active().relu_backward(g, o, n); }
  static void multiply(float* x, const float* y, std::size_t n) { simd::active().multiply(x, y, n); }
  static void sum_rows(const float* x, std::size_t r, std::size_t n, float* out) {
    simd::active().sum_rows(x, r, n, out);
  }
  static void sum_cols(const float* x, std::size_t r, std::size_t n, float* out) {
    simd::active().sum_cols(x, r, n, out);
  }
};

template <>
struct Ops<double> {
  static void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                   const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                   double* c, std::size_t ldc) {
    simd::ref::gemm<double>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
  static void add_bias_rows(double* c, std::size_t r, std::size_t n, const double* b) {
    simd::ref::add_bias_rows<double>(c, r, n, b);
  }
  static void add_bias_cols(double* c, std::size_t r, std::size_t n, const double* b) {
    simd::ref::add_bias_cols<double>(c, r, n, b);
  }
  static void relu(double* x, std::size_t n) { simd::ref::relu<double>(x, n); }
  static void relu_backward(double* g, const double* o, std::size_t n) { simd::ref::relu_backward<double>(g, o, n); }
  static void multiply(double* x, const double* y, std::size_t n) { simd::ref::multiply<double>(x, y, n); }
  static void sum_rows(const double* x, std::size_t r, std::size_t n, double* out) {
    simd::ref::sum_rows<double>(x, r, n, out);
  }
  static void sum_cols(const double* x, std::size_t r, std::size_t n, double* out) {
    simd::ref::sum_cols<double>(x, r, n, out);
  }
};

}  // namespace lesiontl::nn
