#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "cao/nn/layers.hpp"

namespace cao::nn {

// Single-sample convolution on tensors: input [C_in, L] with kernel
// [C_out, C_in, K], or input [C_in, H, W] with kernel [C_out, C_in, KH, KW].
// `stride` is {height, width}; 1D inputs use only the width stride.

namespace detail {

struct ConvSetup {
  ConvSpec spec;
  Index height = 1;
  Index width = 0;
  bool two_d = false;
};

template <typename Scalar>
ConvSetup conv_setup(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, std::array<Index, 2> stride,
                     Padding padding) {
  const bool two_d = input.rank() == 3;
  const bool ok = (input.rank() == 2 && kernel.rank() == 3) || (two_d && kernel.rank() == 4);
  if (!ok || kernel.dim(1) != input.dim(0))
    throw std::invalid_argument("conv: input shape " + input.shape_string() + " incompatible with kernel shape " +
                                kernel.shape_string());
  ConvSetup s;
  s.two_d = two_d;
  s.height = two_d ? input.dim(1) : 1;
  s.width = input.dim(input.rank() - 1);
  s.spec = {input.dim(0), kernel.dim(0), two_d ? kernel.dim(2) : 1, kernel.dim(kernel.rank() - 1),
            two_d ? stride[0] : 1, stride[1], padding};
  return s;
}

template <typename Scalar>
FeatureMap<Scalar> as_feature_map(const Tensor<Scalar>& t, const ConvSetup& s, Index channels) {
  FeatureMap<Scalar> x;
  x.batch = 1;
  x.height = s.height;
  x.width = s.width;
  x.data = t.matrix(channels, s.height * s.width);
  return x;
}

template <typename Scalar>
Tensor<Scalar> as_tensor(const FeatureMap<Scalar>& x, bool two_d) {
  std::vector<Index> shape = two_d ? std::vector<Index>{x.channels(), x.height, x.width}
                                   : std::vector<Index>{x.channels(), x.width};
  return Tensor<Scalar>(shape, Eigen::Map<const Vector<Scalar>>(x.data.data(), x.data.size()));
}

template <typename Scalar>
Conv2d<Scalar> make_layer(const ConvSetup& s, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias) {
  if (bias.size() != s.spec.out_channels)
    throw std::invalid_argument("conv: bias shape " + bias.shape_string() + " does not match kernel outputs " +
                                std::to_string(s.spec.out_channels));
  Conv2d<Scalar> layer("conv", s.spec);
  layer.weight.value.values() = kernel.values();
  layer.bias.value.values() = bias.values();
  return layer;
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> conv_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                            std::array<Index, 2> stride = {1, 1}, Padding padding = Padding::Same) {
  const detail::ConvSetup s = detail::conv_setup(input, kernel, stride, padding);
  const Conv2d<Scalar> layer = detail::make_layer(s, kernel, bias);
  return detail::as_tensor(layer.infer(detail::as_feature_map(input, s, s.spec.in_channels)), s.two_d);
}

template <typename Scalar>
struct ConvGradients {
  Tensor<Scalar> input;
  Tensor<Scalar> kernel;
  Tensor<Scalar> bias;
};

/// Exact gradients of conv_forward at (input, kernel) for upstream `grad_out`.
template <typename Scalar>
ConvGradients<Scalar> conv_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& input,
                                    const Tensor<Scalar>& kernel, std::array<Index, 2> stride = {1, 1},
                                    Padding padding = Padding::Same) {
  const detail::ConvSetup s = detail::conv_setup(input, kernel, stride, padding);
  Conv2d<Scalar> layer = detail::make_layer(s, kernel, Tensor<Scalar>({s.spec.out_channels}));
  const FeatureMap<Scalar> y = layer.forward(detail::as_feature_map(input, s, s.spec.in_channels));
  const std::vector<Index> expected =
      s.two_d ? std::vector<Index>{y.channels(), y.height, y.width} : std::vector<Index>{y.channels(), y.width};
  if (grad_out.shape() != expected)
    throw std::invalid_argument("conv_backward: grad_out shape " + grad_out.shape_string() +
                                " does not match forward output " + shape_string(expected));
  FeatureMap<Scalar> g = y;
  g.data = grad_out.matrix(y.channels(), y.plane());
  const FeatureMap<Scalar> gx = layer.backward(g, true);
  return {detail::as_tensor(gx, s.two_d), Tensor<Scalar>(kernel.shape(), layer.weight.grad.values()),
          layer.bias.grad};
}

}  // namespace cao::nn
