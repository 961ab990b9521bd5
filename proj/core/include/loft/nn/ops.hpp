#pragma once

#include <cstddef>

#include "loft/nn/tensor.hpp"
#include "loft/rng.hpp"

namespace loft::nn {

enum class Padding { same, valid };
enum class Activation { identity, relu, sigmoid, tanh };

/// Output extent and leading padding of a 2-D convolution.
/// "same": out = ceil(in / stride), total padding max((out-1)*stride + k - in, 0)
/// split with the smaller half first. "valid": out = (in - k) / stride + 1.
struct ConvGeometry {
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;
};
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel, std::size_t stride, Padding pad);

// Convolution: x is NHWC, w is [k, k, c_in, c_out], b is [c_out]. Cross-correlation.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, Padding pad);

struct Conv2dGrads {
  Tensor dx, dw, db;
};
/// Gradients of a scalar loss given dy = dL/d(output). dx is left empty when need_dx is false.
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, std::size_t stride, Padding pad,
                            bool need_dx = true);

// Fully connected: x is [B, in], w is [in, out], b is [out].
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);

struct DenseGrads {
  Tensor dx, dw, db;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, bool need_dx = true);

Tensor activation_forward(const Tensor& x, Activation act);
/// Uses the forward *output* y, which determines the derivative of every supported activation.
Tensor activation_backward(const Tensor& y, const Tensor& dy, Activation act);

/// Inverted dropout: in train mode each element survives with probability 1 - rate and is
/// scaled by 1 / (1 - rate); the mask (0 or the scale) is written to *mask. Eval mode is identity.
Tensor dropout_forward(const Tensor& x, double rate, bool train, Rng& rng, Tensor* mask);
Tensor dropout_backward(const Tensor& dy, const Tensor& mask);

/// Nearest-neighbour resize of NHWC maps; source index = floor(dst * in / out).
Tensor resize_nearest_forward(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor resize_nearest_backward(const Tensor& dy, std::size_t in_h, std::size_t in_w);

}  // namespace loft::nn
