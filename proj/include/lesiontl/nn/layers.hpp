#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lesiontl/nn/tensor.hpp"
#include "lesiontl/rng.hpp"

namespace lesiontl::nn {

enum class LayerRole { backbone, head, output };

template <typename T>
class Layer {
 public:
  Layer(std::string name, LayerRole role) : name_(std::move(name)), role_(role) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  LayerRole role() const { return role_; }

  virtual std::string_view kind() const = 0;
  virtual FeatureShape output_shape(FeatureShape in) const = 0;
  virtual void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode, Rng* rng) = 0;

  // grad_out may be overwritten. grad_in is null when no earlier layer needs it.
  virtual void backward(const Tensor<T>& in, const Tensor<T>& out, Tensor<T>& grad_out,
                        Tensor<T>* grad_in) = 0;

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<const Parameter<T>*> parameters() const { return {}; }

  bool has_weights() const { return !parameters().empty(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
  }

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool trainable() const { return has_weights() && !frozen_; }

 private:
  std::string name_;
  LayerRole role_;
  bool frozen_ = false;
};

namespace detail {

// Output columns ox for which ox*stride + offset falls inside [0, extent).
inline void valid_range(std::size_t out, std::size_t stride, std::ptrdiff_t offset, std::size_t extent,
                        std::size_t& lo, std::size_t& hi) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t first = offset >= 0 ? 0 : (-offset + s - 1) / s;
  std::ptrdiff_t last = static_cast<std::ptrdiff_t>(extent) - 1 - offset;  // largest ox*s allowed
  std::ptrdiff_t end = last < 0 ? 0 : last / s + 1;
  first = std::clamp<std::ptrdiff_t>(first, 0, static_cast<std::ptrdiff_t>(out));
  end = std::clamp<std::ptrdiff_t>(end, first, static_cast<std::ptrdiff_t>(out));
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(end);
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
};

// col[(c*k + ky)*k + kx][oy*out_w + ox] = in[c][oy*s + ky - p][ox*s + kx - p]
template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* col) {
  const std::size_t ohw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = in + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* dst = col + ((c * g.kernel + ky) * g.kernel + kx) * ohw;
        std::size_t x_lo, x_hi;
        const auto x_off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
        valid_range(g.out_w, g.stride, x_off, g.width, x_lo, x_hi);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          T* row = dst + oy * g.out_w;
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          std::fill(row, row + x_lo, T(0));
          if (g.stride == 1) {
            if (x_hi > x_lo) std::memcpy(row + x_lo, src + static_cast<std::ptrdiff_t>(x_lo) + x_off, (x_hi - x_lo) * sizeof(T));
          } else {
            for (std::size_t ox = x_lo; ox < x_hi; ++ox) {
              row[ox] = src[static_cast<std::ptrdiff_t>(ox * g.stride) + x_off];
            }
          }
          std::fill(row + x_hi, row + g.out_w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col back into the (pre-zeroed) image.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* in) {
  const std::size_t ohw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = in + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* src = col + ((c * g.kernel + ky) * g.kernel + kx) * ohw;
        std::size_t x_lo, x_hi;
        const auto x_off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
        valid_range(g.out_w, g.stride, x_off, g.width, x_lo, x_hi);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const T* row = src + oy * g.out_w;
          for (std::size_t ox = x_lo; ox < x_hi; ++ox) {
            dst[static_cast<std::ptrdiff_t>(ox * g.stride) + x_off] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Convolution followed by ReLU. Weights are [out][in][k][k].
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad, LayerRole role = LayerRole::backbone)
      : Layer<T>(std::move(name), role),
        in_channels_(in_channels),
        out_channels_(out_channels),
        kernel_(kernel),
        stride_(stride),
        pad_(pad) {
    weight_.name = this->name() + ".weight";
    weight_.dims = {out_channels, in_channels, kernel, kernel};
    weight_.value.assign(out_channels * in_channels * kernel * kernel, T(0));
    bias_.name = this->name() + ".bias";
    bias_.dims = {out_channels};
    bias_.value.assign(out_channels, T(0));
  }

  std::string_view kind() const override { return "conv2d"; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  std::size_t kernel() const { return kernel_; }

  FeatureShape output_shape(FeatureShape in) const override {
    if (in.channels != in_channels_) throw std::invalid_argument(this->name() + ": channel mismatch");
    const std::size_t h = in.height + 2 * pad_;
    const std::size_t w = in.width + 2 * pad_;
    if (h < kernel_ || w < kernel_) throw std::invalid_argument(this->name() + ": input smaller than kernel");
    return {out_channels_, (h - kernel_) / stride_ + 1, (w - kernel_) / stride_ + 1};
  }

  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, Rng*) override {
    const FeatureShape os = output_shape(in.shape);
    const auto g = geometry(in.shape, os);
    out.reshape(in.batch, os);
    const std::size_t k = col_rows();
    const std::size_t ohw = os.height * os.width;
    col_.resize(k * ohw);
    for (std::size_t n = 0; n < in.batch; ++n) {
      T* y = out.sample(n);
      detail::im2col(in.sample(n), g, col_.data());
      Ops<T>::gemm(false, false, out_channels_, ohw, k, T(1), weight_.value.data(), k, col_.data(), ohw,
                   T(0), y, ohw);
      Ops<T>::add_bias_rows(y, out_channels_, ohw, bias_.value.data());
      Ops<T>::relu(y, out_channels_ * ohw);
    }
  }

  void backward(const Tensor<T>& in, const Tensor<T>& out, Tensor<T>& grad_out, Tensor<T>* grad_in) override {
    const auto g = geometry(in.shape, out.shape);
    const std::size_t k = col_rows();
    const std::size_t ohw = out.shape.height * out.shape.width;
    const bool update = this->trainable();
    col_.resize(k * ohw);
    if (grad_in != nullptr) {
      grad_in->reshape(in.batch, in.shape);
      std::fill(grad_in->data.begin(), grad_in->data.end(), T(0));
    }
    for (std::size_t n = 0; n < in.batch; ++n) {
      T* gy = grad_out.sample(n);
      Ops<T>::relu_backward(gy, out.sample(n), out_channels_ * ohw);
      if (update) {
        detail::im2col(in.sample(n), g, col_.data());
        Ops<T>::gemm(false, true, out_channels_, k, ohw, T(1), gy, ohw, col_.data(), ohw, T(1),
                     weight_.grad.data(), k);
        Ops<T>::sum_rows(gy, out_channels_, ohw, bias_.grad.data());
      }
      if (grad_in != nullptr) {
        Ops<T>::gemm(true, false, k, ohw, out_channels_, T(1), weight_.value.data(), k, gy, ohw, T(0),
                     col_.data(), ohw);
        detail::col2im(col_.data(), g, grad_in->sample(n));
      }
    }
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Parameter<T>*> parameters() const override { return {&weight_, &bias_}; }

 private:
  std::size_t col_rows() const { return in_channels_ * kernel_ * kernel_; }
  detail::ConvGeometry geometry(FeatureShape in, FeatureShape out) const {
    return {in.channels, in.height, in.width, kernel_, stride_, pad_, out.height, out.width};
  }

  std::size_t in_channels_, out_channels_, kernel_, stride_, pad_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  std::vector<T> col_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(std::string name, std::size_t kernel, std::size_t stride, LayerRole role = LayerRole::backbone)
      : Layer<T>(std::move(name), role), kernel_(kernel), stride_(stride) {}

  std::string_view kind() const override { return "maxpool"; }

  FeatureShape output_shape(FeatureShape in) const override {
    if (in.height < kernel_ || in.width < kernel_) {
      throw std::invalid_argument(this->name() + ": input smaller than pooling window");
    }
    return {in.channels, (in.height - kernel_) / stride_ + 1, (in.width - kernel_) / stride_ + 1};
  }

  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, Rng*) override {
    const FeatureShape os = output_shape(in.shape);
    out.reshape(in.batch, os);
    argmax_.resize(out.data.size());
    const std::size_t ih = in.shape.height, iw = in.shape.width;
    std::size_t o = 0;
    for (std::size_t n = 0; n < in.batch; ++n) {
      for (std::size_t c = 0; c < os.channels; ++c) {
        const T* plane = in.sample(n) + c * ih * iw;
        for (std::size_t oy = 0; oy < os.height; ++oy) {
          for (std::size_t ox = 0; ox < os.width; ++ox, ++o) {
            std::size_t best = (oy * stride_) * iw + ox * stride_;
            T value = plane[best];
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
              const std::size_t row = (oy * stride_ + ky) * iw + ox * stride_;
              for (std::size_t kx = 0; kx < kernel_; ++kx) {
                if (plane[row + kx] > value) {
                  value = plane[row + kx];
                  best = row + kx;
                }
              }
            }
            out.data[o] = value;
            argmax_[o] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
  }

  void backward(const Tensor<T>& in, const Tensor<T>& out, Tensor<T>& grad_out, Tensor<T>* grad_in) override {
    if (grad_in == nullptr) return;
    grad_in->reshape(in.batch, in.shape);
    std::fill(grad_in->data.begin(), grad_in->data.end(), T(0));
    const std::size_t plane_in = in.shape.height * in.shape.width;
    const std::size_t plane_out = out.shape.height * out.shape.width;
    std::size_t o = 0;
    for (std::size_t n = 0; n < in.batch; ++n) {
      for (std::size_t c = 0; c < out.shape.channels; ++c) {
        T* plane = grad_in->sample(n) + c * plane_in;
        for (std::size_t i = 0; i < plane_out; ++i, ++o) plane[argmax_[o]] += grad_out.data[o];
      }
    }
  }

 private:
  std::size_t kernel_, stride_;
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  explicit Flatten(std::string name, LayerRole role = LayerRole::head) : Layer<T>(std::move(name), role) {}

  std::string_view kind() const override { return "flatten"; }
  FeatureShape output_shape(FeatureShape in) const override { return {in.size(), 1, 1}; }

  void forward(const Tensor<T>& in, Tensor<T>& out, Mode, Rng*) override {
    out.batch = in.batch;
    out.shape = output_shape(in.shape);
    out.data = in.data;
  }

  void backward(const Tensor<T>& in, const Tensor<T>&, Tensor<T>& grad_out, Tensor<T>* grad_in) override {
    if (grad_in == nullptr) return;
    grad_in->batch = in.batch;
    grad_in->shape = in.shape;
    grad_in->data = grad_out.data;
  }
};

enum class Activation { none, relu };

/// Fully connected layer with optional ReLU and inverted dropout applied to
/// its activations during training. Weights are [out][in].
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, std::size_t in_features, std::size_t out_features, Activation activation,
        double dropout_rate, LayerRole role)
      : Layer<T>(std::move(name), role),
        in_(in_features),
        out_(out_features),
        activation_(activation),
        dropout_rate_(dropout_rate) {
    weight_.name = this->name() + ".weight";
    weight_.dims = {out_features, in_features};
    weight_.value.assign(out_features * in_features, T(0));
    bias_.name = this->name() + ".bias";
    bias_.dims = {out_features};
    bias_.value.assign(out_features, T(0));
  }

  std::string_view kind() const override { return this->role() == LayerRole::output ? "dense_softmax" : "dense"; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  double dropout_rate() const { return dropout_rate_; }

  FeatureShape output_shape(FeatureShape in) const override {
    if (in.size() != in_) throw std::invalid_argument(this->name() + ": feature count mismatch");
    return {out_, 1, 1};
  }

  void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode, Rng* rng) override {
    output_shape(in.shape);
    const std::size_t b = in.batch;
    out.reshape(b, {out_, 1, 1});
    Ops<T>::gemm(false, true, b, out_, in_, T(1), in.data.data(), in_, weight_.value.data(), in_, T(0),
                 out.data.data(), out_);
    Ops<T>::add_bias_cols(out.data.data(), b, out_, bias_.value.data());
    if (activation_ == Activation::relu) Ops<T>::relu(out.data.data(), out.data.size());
    masked_ = mode == Mode::train && dropout_rate_ > 0.0;
    if (masked_) {
      if (rng == nullptr) throw std::logic_error(this->name() + ": dropout needs a random source");
      const T keep_scale = T(1) / T(1.0 - dropout_rate_);
      mask_.resize(out.data.size());
      for (auto& m : mask_) m = rng->uniform() >= dropout_rate_ ? keep_scale : T(0);
      Ops<T>::multiply(out.data.data(), mask_.data(), out.data.size());
    }
  }

  void backward(const Tensor<T>& in, const Tensor<T>& out, Tensor<T>& grad_out, Tensor<T>* grad_in) override {
    const std::size_t b = in.batch;
    T* g = grad_out.data.data();
    if (masked_) Ops<T>::multiply(g, mask_.data(), grad_out.data.size());
    // After dropout out > 0 still identifies the active ReLU units wherever
    // the mask kept the unit; dropped units already carry zero gradient.
    if (activation_ == Activation::relu) Ops<T>::relu_backward(g, out.data.data(), grad_out.data.size());
    if (this->trainable()) {
      Ops<T>::gemm(true, false, out_, in_, b, T(1), g, out_, in.data.data(), in_, T(1), weight_.grad.data(), in_);
      Ops<T>::sum_cols(g, b, out_, bias_.grad.data());
    }
    if (grad_in != nullptr) {
      grad_in->reshape(b, in.shape);
      Ops<T>::gemm(false, false, b, in_, out_, T(1), g, out_, weight_.value.data(), in_, T(0),
                   grad_in->data.data(), in_);
    }
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Parameter<T>*> parameters() const override { return {&weight_, &bias_}; }

 private:
  std::size_t in_, out_;
  Activation activation_;
  double dropout_rate_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  std::vector<T> mask_;
  bool masked_ = false;
};

}  // namespace lesiontl::nn
