#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cao/nn/tensor.hpp"
#include "cao/random.hpp"

namespace cao::nn {

/// Batched activations: channels x (batch * height * width), each channel row
/// laid out batch-major then row-major over the plane. 1D signals use height 1.
template <typename Scalar>
struct FeatureMap {
  RowMatrix<Scalar> data;
  Index batch = 0;
  Index height = 1;
  Index width = 0;

  Index channels() const { return data.rows(); }
  Index plane() const { return height * width; }
};

enum class Padding { Same, Valid };

struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel_h = 1;
  Index kernel_w = 1;
  Index stride_h = 1;
  Index stride_w = 1;
  Padding padding = Padding::Same;

  Index patch() const { return in_channels * kernel_h * kernel_w; }
};

struct ConvGeometry {
  Index out_h = 0, out_w = 0;
  Index pad_top = 0, pad_left = 0;
};

/// "Same" gives ceil(in / stride) outputs with the extra padding split
/// floor-left; "valid" uses no padding.
inline ConvGeometry conv_geometry(const ConvSpec& s, Index in_h, Index in_w) {
  auto axis = [&](Index in, Index k, Index st, Index& out, Index& pad) {
    if (st < 1 || k < 1) throw std::invalid_argument("conv: kernel and stride must be >= 1");
    if (s.padding == Padding::Same) {
      out = (in + st - 1) / st;
      pad = std::max<Index>((out - 1) * st + k - in, 0) / 2;
    } else {
      if (in < k) throw std::invalid_argument("conv: valid padding needs input >= kernel");
      out = (in - k) / st + 1;
      pad = 0;
    }
  };
  ConvGeometry g;
  axis(in_h, s.kernel_h, s.stride_h, g.out_h, g.pad_top);
  axis(in_w, s.kernel_w, s.stride_w, g.out_w, g.pad_left);
  return g;
}

/// Unfolds input patches into columns: (C*kh*kw) x (batch*out_h*out_w).
template <typename Scalar>
void im2col(const FeatureMap<Scalar>& x, const ConvSpec& s, const ConvGeometry& g,
            RowMatrix<Scalar>& cols) {
  const Index H = x.height, W = x.width, B = x.batch;
  const Index Ho = g.out_h, Wo = g.out_w;
  cols.resize(s.patch(), B * Ho * Wo);
  Index r = 0;
  for (Index c = 0; c < s.in_channels; ++c) {
    const Scalar* src_c = x.data.row(c).data();
    for (Index i = 0; i < s.kernel_h; ++i) {
      for (Index j = 0; j < s.kernel_w; ++j, ++r) {
        Scalar* dst = cols.row(r).data();
        for (Index b = 0; b < B; ++b) {
          for (Index ho = 0; ho < Ho; ++ho) {
            Scalar* d = dst + (b * Ho + ho) * Wo;
            const Index hi = ho * s.stride_h + i - g.pad_top;
            if (hi < 0 || hi >= H) {
              std::fill(d, d + Wo, Scalar(0));
              continue;
            }
            const Scalar* srow = src_c + (b * H + hi) * W;
            for (Index wo = 0; wo < Wo; ++wo) {
              const Index wi = wo * s.stride_w + j - g.pad_left;
              d[wo] = (wi >= 0 && wi < W) ? srow[wi] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters column gradients back onto the input grid.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvSpec& s, const ConvGeometry& g, FeatureMap<Scalar>& x) {
  const Index H = x.height, W = x.width, B = x.batch;
  const Index Ho = g.out_h, Wo = g.out_w;
  x.data.setZero(s.in_channels, B * H * W);
  Index r = 0;
  for (Index c = 0; c < s.in_channels; ++c) {
    Scalar* dst_c = x.data.row(c).data();
    for (Index i = 0; i < s.kernel_h; ++i) {
      for (Index j = 0; j < s.kernel_w; ++j, ++r) {
        const Scalar* src = cols.row(r).data();
        for (Index b = 0; b < B; ++b) {
          for (Index ho = 0; ho < Ho; ++ho) {
            const Index hi = ho * s.stride_h + i - g.pad_top;
            if (hi < 0 || hi >= H) continue;
            const Scalar* d = src + (b * Ho + ho) * Wo;
            Scalar* xrow = dst_c + (b * H + hi) * W;
            for (Index wo = 0; wo < Wo; ++wo) {
              const Index wi = wo * s.stride_w + j - g.pad_left;
              if (wi >= 0 && wi < W) xrow[wi] += d[wo];
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, const ConvSpec& spec)
      : spec_(spec),
        weight(name + ".weight", {spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}),
        bias(name + ".bias", {spec.out_channels}) {}

  const ConvSpec& spec() const { return spec_; }

  void init(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(spec_.patch()));
    for (Index i = 0; i < weight.value.size(); ++i) weight.value.values()[i] = Scalar(std * rng.normal());
    bias.value.set_zero();
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    in_batch_ = x.batch;
    in_h_ = x.height;
    in_w_ = x.width;
    return run(x, cols_);
  }

  FeatureMap<Scalar> infer(const FeatureMap<Scalar>& x) const {
    RowMatrix<Scalar> cols;
    return run(x, cols);
  }

  /// Accumulates weight/bias gradients; returns the input gradient when asked.
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad_out, bool input_grad = true) {
    const ConvGeometry g = conv_geometry(spec_, in_h_, in_w_);
    if (grad_out.channels() != spec_.out_channels || grad_out.data.cols() != in_batch_ * g.out_h * g.out_w)
      throw std::invalid_argument("conv backward: gradient shape does not match the forward pass");
    weight.grad.matrix(spec_.out_channels, spec_.patch()).noalias() += grad_out.data * cols_.transpose();
    bias.grad.values() += grad_out.data.rowwise().sum();
    FeatureMap<Scalar> gx;
    gx.batch = in_batch_;
    gx.height = in_h_;
    gx.width = in_w_;
    if (input_grad) {
      const RowMatrix<Scalar> dcols = kernel().transpose() * grad_out.data;
      col2im(dcols, spec_, g, gx);
    }
    return gx;
  }

  void collect(std::vector<Parameter<Scalar>*>& trainable, std::vector<Parameter<Scalar>*>&) {
    trainable.push_back(&weight);
    trainable.push_back(&bias);
  }

 private:
  Eigen::Map<const RowMatrix<Scalar>> kernel() const {
    return weight.value.matrix(spec_.out_channels, spec_.patch());
  }

  FeatureMap<Scalar> run(const FeatureMap<Scalar>& x, RowMatrix<Scalar>& cols) const {
    if (x.channels() != spec_.in_channels || x.data.cols() != x.batch * x.plane())
      throw std::invalid_argument("conv: input has " + std::to_string(x.channels()) +
                                  " channels, layer expects " + std::to_string(spec_.in_channels));
    const ConvGeometry g = conv_geometry(spec_, x.height, x.width);
    im2col(x, spec_, g, cols);
    FeatureMap<Scalar> y;
    y.batch = x.batch;
    y.height = g.out_h;
    y.width = g.out_w;
    // One product per sample: a batched GEMM accumulates columns differently
    // depending on where they fall, and a sample's output must not depend on
    // its position in the batch.
    y.data.resize(spec_.out_channels, x.batch * g.out_h * g.out_w);
    const Index n = g.out_h * g.out_w;
    for (Index b = 0; b < x.batch; ++b) y.data.middleCols(b * n, n).noalias() = kernel() * cols.middleCols(b * n, n);
    y.data.colwise() += bias.value.values();
    return y;
  }

  ConvSpec spec_{};
  RowMatrix<Scalar> cols_;
  Index in_batch_ = 0, in_h_ = 0, in_w_ = 0;

 public:
  Parameter<Scalar> weight;
  Parameter<Scalar> bias;
};

/// Per-channel batch normalization over batch and spatial positions. Train
/// mode normalizes with batch statistics and updates running estimates
/// (running = momentum * running + (1 - momentum) * batch, unbiased variance);
/// eval mode uses the running estimates.
template <typename Scalar>
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm() = default;
  BatchNorm(const std::string& name, Index channels)
      : gamma(name + ".gamma", {channels}, Scalar(1)),
        beta(name + ".beta", {channels}, Scalar(0)),
        running_mean(name + ".running_mean", {channels}, Scalar(0), false),
        running_var(name + ".running_var", {channels}, Scalar(1), false) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    check(x);
    const auto n = static_cast<Scalar>(x.data.cols());
    const Vector<Scalar> mean = x.data.rowwise().mean();
    Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xc =
        x.data.array().colwise() - mean.array();
    const Vector<Scalar> var = xc.square().rowwise().mean();
    inv_std_ = (var.array() + Scalar(kEps)).rsqrt().matrix();
    xhat_ = xc.colwise() * inv_std_.array();

    FeatureMap<Scalar> y{RowMatrix<Scalar>(), x.batch, x.height, x.width};
    y.data = ((xhat_.colwise() * gamma.value.values().array()).colwise() + beta.value.values().array()).matrix();

    const Scalar unbias = n > 1 ? n / (n - 1) : Scalar(1);
    running_mean.value.values() =
        Scalar(kMomentum) * running_mean.value.values() + Scalar(1 - kMomentum) * mean;
    running_var.value.values() =
        Scalar(kMomentum) * running_var.value.values() + Scalar(1 - kMomentum) * unbias * var;
    return y;
  }

  FeatureMap<Scalar> infer(const FeatureMap<Scalar>& x) const {
    check(x);
    const auto scale =
        (gamma.value.values().array() * (running_var.value.values().array() + Scalar(kEps)).rsqrt()).eval();
    const auto shift = (beta.value.values().array() - running_mean.value.values().array() * scale).eval();
    FeatureMap<Scalar> y{RowMatrix<Scalar>(), x.batch, x.height, x.width};
    y.data = ((x.data.array().colwise() * scale).colwise() + shift).matrix();
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& g) {
    const auto n = static_cast<Scalar>(g.data.cols());
    const auto ga = g.data.array();
    gamma.grad.values() += (ga * xhat_).rowwise().sum().matrix();
    beta.grad.values() += ga.rowwise().sum().matrix();

    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dxhat =
        ga.colwise() * gamma.value.values().array();
    const auto sum_d = dxhat.rowwise().sum().eval();
    const auto sum_dx = (dxhat * xhat_).rowwise().sum().eval();
    FeatureMap<Scalar> gx{RowMatrix<Scalar>(), g.batch, g.height, g.width};
    gx.data = ((((dxhat * n).colwise() - sum_d) - xhat_.colwise() * sum_dx).colwise() * (inv_std_.array() / n))
                  .matrix();
    return gx;
  }

  void collect(std::vector<Parameter<Scalar>*>& trainable, std::vector<Parameter<Scalar>*>& buffers) {
    trainable.push_back(&gamma);
    trainable.push_back(&beta);
    buffers.push_back(&running_mean);
    buffers.push_back(&running_var);
  }

  Parameter<Scalar> gamma, beta, running_mean, running_var;

 private:
  void check(const FeatureMap<Scalar>& x) const {
    if (x.channels() != gamma.value.size())
      throw std::invalid_argument("batchnorm: expected " + std::to_string(gamma.value.size()) + " channels, got " +
                                  std::to_string(x.channels()));
  }

  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xhat_;
  Vector<Scalar> inv_std_;
};

template <typename Scalar>
class Relu {
 public:
  RowMatrix<Scalar> forward(const RowMatrix<Scalar>& x) {
    out_ = x.cwiseMax(Scalar(0));
    return out_;
  }
  static RowMatrix<Scalar> infer(const RowMatrix<Scalar>& x) { return x.cwiseMax(Scalar(0)); }
  RowMatrix<Scalar> backward(const RowMatrix<Scalar>& g) const {
    return (g.array() * (out_.array() > Scalar(0)).template cast<Scalar>()).matrix();
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) { return {forward(x.data), x.batch, x.height, x.width}; }
  static FeatureMap<Scalar> infer(const FeatureMap<Scalar>& x) { return {infer(x.data), x.batch, x.height, x.width}; }
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& g) const { return {backward(g.data), g.batch, g.height, g.width}; }

 private:
  RowMatrix<Scalar> out_;
};

/// Non-overlapping max pooling along the width (time) axis; a short trailing
/// group is pooled on its own.
template <typename Scalar>
class MaxPoolWidth {
 public:
  explicit MaxPoolWidth(Index size = 2) : size_(size) {
    if (size < 1) throw std::invalid_argument("maxpool: size must be >= 1");
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    in_ = {RowMatrix<Scalar>(), x.batch, x.height, x.width};
    return run(x, &argmax_);
  }
  FeatureMap<Scalar> infer(const FeatureMap<Scalar>& x) const { return run(x, nullptr); }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& g) const {
    FeatureMap<Scalar> gx{RowMatrix<Scalar>::Zero(g.channels(), in_.batch * in_.plane()), in_.batch, in_.height,
                          in_.width};
    for (Index c = 0; c < g.channels(); ++c)
      for (Index k = 0; k < g.data.cols(); ++k) gx.data(c, argmax_(c, k)) += g.data(c, k);
    return gx;
  }

 private:
  FeatureMap<Scalar> run(const FeatureMap<Scalar>& x, Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>* arg) const {
    const Index wo = (x.width + size_ - 1) / size_;
    const Index rows = x.batch * x.height;
    FeatureMap<Scalar> y{RowMatrix<Scalar>(x.channels(), rows * wo), x.batch, x.height, wo};
    if (arg) arg->resize(x.channels(), rows * wo);
    for (Index c = 0; c < x.channels(); ++c) {
      for (Index r = 0; r < rows; ++r) {
        for (Index o = 0; o < wo; ++o) {
          const Index start = r * x.width + o * size_;
          const Index end = std::min(start + size_, (r + 1) * x.width);
          Index best = start;
          for (Index k = start + 1; k < end; ++k)
            if (x.data(c, k) > x.data(c, best)) best = k;
          y.data(c, r * wo + o) = x.data(c, best);
          if (arg) (*arg)(c, r * wo + o) = best;
        }
      }
    }
    return y;
  }

  Index size_;
  FeatureMap<Scalar> in_;
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax_;
};

/// Mean over each sample's plane: channels x batch.
template <typename Scalar>
class GlobalAvgPool {
 public:
  RowMatrix<Scalar> forward(const FeatureMap<Scalar>& x) {
    in_ = {RowMatrix<Scalar>(), x.batch, x.height, x.width};
    return infer(x);
  }
  static RowMatrix<Scalar> infer(const FeatureMap<Scalar>& x) {
    RowMatrix<Scalar> y(x.channels(), x.batch);
    const Index p = x.plane();
    for (Index c = 0; c < x.channels(); ++c)
      for (Index b = 0; b < x.batch; ++b) {
        // Plain loop: a vectorized reduction would sum in an alignment-dependent
        // order, so identical samples could differ in the last bit.
        const Scalar* v = x.data.data() + c * x.data.cols() + b * p;
        Scalar acc(0);
        for (Index k = 0; k < p; ++k) acc += v[k];
        y(c, b) = acc / Scalar(p);
      }
    return y;
  }
  FeatureMap<Scalar> backward(const RowMatrix<Scalar>& g) const {
    const Index p = in_.plane();
    FeatureMap<Scalar> gx{RowMatrix<Scalar>(g.rows(), in_.batch * p), in_.batch, in_.height, in_.width};
    for (Index c = 0; c < g.rows(); ++c)
      for (Index b = 0; b < in_.batch; ++b) gx.data.row(c).segment(b * p, p).setConstant(g(c, b) / Scalar(p));
    return gx;
  }

 private:
  FeatureMap<Scalar> in_;
};

/// y = W x + b on column-batched input (features x batch).
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out)
      : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

  Index in_features() const { return weight.value.dim(1); }
  Index out_features() const { return weight.value.dim(0); }

  void init(Rng& rng, double gain = 2.0) {
    const double std = std::sqrt(gain / static_cast<double>(in_features()));
    for (Index i = 0; i < weight.value.size(); ++i) weight.value.values()[i] = Scalar(std * rng.normal());
    bias.value.set_zero();
  }

  RowMatrix<Scalar> forward(const RowMatrix<Scalar>& x) {
    x_ = x;
    return infer(x);
  }
  RowMatrix<Scalar> infer(const RowMatrix<Scalar>& x) const {
    if (x.rows() != in_features())
      throw std::invalid_argument("linear: expected " + std::to_string(in_features()) + " features, got " +
                                  std::to_string(x.rows()));
    RowMatrix<Scalar> y(out_features(), x.cols());
    for (Index b = 0; b < x.cols(); ++b) y.col(b).noalias() = w() * x.col(b);
    y.colwise() += bias.value.values();
    return y;
  }
  RowMatrix<Scalar> backward(const RowMatrix<Scalar>& g) {
    weight.grad.matrix(out_features(), in_features()).noalias() += g * x_.transpose();
    bias.grad.values() += g.rowwise().sum();
    return w().transpose() * g;
  }

  void collect(std::vector<Parameter<Scalar>*>& trainable, std::vector<Parameter<Scalar>*>&) {
    trainable.push_back(&weight);
    trainable.push_back(&bias);
  }

  Parameter<Scalar> weight, bias;

 private:
  Eigen::Map<const RowMatrix<Scalar>> w() const { return weight.value.matrix(out_features(), in_features()); }
  RowMatrix<Scalar> x_;
};

/// conv -> norm -> ReLU -> conv -> norm, plus the skip path (identity, or a
/// strided 1x1 projection when channels or stride change), then ReLU.
template <typename Scalar>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, Index in_ch, Index out_ch, Index kernel_h, Index kernel_w,
                Index stride_w)
      : conv1_(name + ".conv1", {in_ch, out_ch, kernel_h, kernel_w, 1, stride_w, Padding::Same}),
        bn1_(name + ".bn1", out_ch),
        conv2_(name + ".conv2", {out_ch, out_ch, kernel_h, kernel_w, 1, 1, Padding::Same}),
        bn2_(name + ".bn2", out_ch),
        projected_(in_ch != out_ch || stride_w != 1) {
    if (projected_) proj_ = Conv2d<Scalar>(name + ".proj", {in_ch, out_ch, 1, 1, 1, stride_w, Padding::Same});
  }

  bool projected() const { return projected_; }
  Conv2d<Scalar>& conv1() { return conv1_; }
  Conv2d<Scalar>& conv2() { return conv2_; }
  BatchNorm<Scalar>& bn1() { return bn1_; }
  BatchNorm<Scalar>& bn2() { return bn2_; }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (projected_) proj_.init(rng);
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    FeatureMap<Scalar> a = relu1_.forward(bn1_.forward(conv1_.forward(x)));
    a = bn2_.forward(conv2_.forward(a));
    if (projected_)
      a.data += proj_.forward(x).data;
    else
      a.data += x.data;
    return relu_out_.forward(a);
  }

  FeatureMap<Scalar> infer(const FeatureMap<Scalar>& x) const {
    FeatureMap<Scalar> a = Relu<Scalar>::infer(bn1_.infer(conv1_.infer(x)));
    a = bn2_.infer(conv2_.infer(a));
    if (projected_)
      a.data += proj_.infer(x).data;
    else
      a.data += x.data;
    return Relu<Scalar>::infer(a);
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad_out) {
    const FeatureMap<Scalar> g = relu_out_.backward(grad_out);
    FeatureMap<Scalar> gx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(g)))));
    if (projected_)
      gx.data += proj_.backward(g).data;
    else
      gx.data += g.data;
    return gx;
  }

  void collect(std::vector<Parameter<Scalar>*>& trainable, std::vector<Parameter<Scalar>*>& buffers) {
    conv1_.collect(trainable, buffers);
    bn1_.collect(trainable, buffers);
    conv2_.collect(trainable, buffers);
    bn2_.collect(trainable, buffers);
    if (projected_) proj_.collect(trainable, buffers);
  }

 private:
  Conv2d<Scalar> conv1_;
  BatchNorm<Scalar> bn1_;
  Relu<Scalar> relu1_;
  Conv2d<Scalar> conv2_;
  BatchNorm<Scalar> bn2_;
  Conv2d<Scalar> proj_;
  Relu<Scalar> relu_out_;
  bool projected_ = false;
};

}  // namespace cao::nn
