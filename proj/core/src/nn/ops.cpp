#include "loft/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "loft/error.hpp"

namespace loft::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapRow = Eigen::Map<Eigen::RowVectorXd>;
using ConstMapRow = Eigen::Map<const Eigen::RowVectorXd>;

// Rows of one im2col block are capped so full-scale batches stay within a few MB.
constexpr std::size_t kMaxColRows = 2048;

struct ConvDims {
  std::size_t batch, in_h, in_w, in_c, kernel, out_c;
  ConvGeometry geo;
  std::size_t patch() const { return kernel * kernel * in_c; }
  std::size_t out_pixels() const { return geo.out_h * geo.out_w; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::size_t stride, Padding pad) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be NHWC, got " + shape_string(x.shape()));
  if (w.rank() != 4 || w.dim(0) != w.dim(1)) {
    throw ShapeError("conv2d: weights must be [k, k, c_in, c_out], got " + shape_string(w.shape()));
  }
  if (w.dim(0) % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (w.dim(2) != x.dim(3)) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(3)) + " channels, weights expect " +
                     std::to_string(w.dim(2)));
  }
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(3), {}};
  d.geo = conv_geometry(d.in_h, d.in_w, d.kernel, stride, pad);
  return d;
}

/// Fills `col` (rows = samples [b0, b0+nb) x output pixels, cols = patch) from x.
void im2col(const Tensor& x, const ConvDims& d, std::size_t stride, std::size_t b0, std::size_t nb, double* col) {
  const std::size_t patch = d.patch();
  const double* src = x.ptr();
  std::size_t row = 0;
  for (std::size_t b = b0; b < b0 + nb; ++b) {
    for (std::size_t oy = 0; oy < d.geo.out_h; ++oy) {
      for (std::size_t ox = 0; ox < d.geo.out_w; ++ox, ++row) {
        double* dst = col + row * patch;
        for (std::size_t ky = 0; ky < d.kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(d.geo.pad_top);
          for (std::size_t kx = 0; kx < d.kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(d.geo.pad_left);
            double* cell = dst + (ky * d.kernel + kx) * d.in_c;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(d.in_h) || ix >= static_cast<long>(d.in_w)) {
              std::fill(cell, cell + d.in_c, 0.0);
            } else {
              const double* s = src + ((b * d.in_h + static_cast<std::size_t>(iy)) * d.in_w +
                                       static_cast<std::size_t>(ix)) * d.in_c;
              std::copy(s, s + d.in_c, cell);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, std::size_t stride, std::size_t b0, std::size_t nb,
                Tensor& dx) {
  const std::size_t patch = d.patch();
  double* dst = dx.ptr();
  std::size_t row = 0;
  for (std::size_t b = b0; b < b0 + nb; ++b) {
    for (std::size_t oy = 0; oy < d.geo.out_h; ++oy) {
      for (std::size_t ox = 0; ox < d.geo.out_w; ++ox, ++row) {
        const double* src = col + row * patch;
        for (std::size_t ky = 0; ky < d.kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(d.geo.pad_top);
          if (iy < 0 || iy >= static_cast<long>(d.in_h)) continue;
          for (std::size_t kx = 0; kx < d.kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(d.geo.pad_left);
            if (ix < 0 || ix >= static_cast<long>(d.in_w)) continue;
            const double* cell = src + (ky * d.kernel + kx) * d.in_c;
            double* t = dst + ((b * d.in_h + static_cast<std::size_t>(iy)) * d.in_w + static_cast<std::size_t>(ix)) *
                                  d.in_c;
            for (std::size_t c = 0; c < d.in_c; ++c) t[c] += cell[c];
          }
        }
      }
    }
  }
}

std::size_t chunk_samples(const ConvDims& d) {
  return std::max<std::size_t>(1, kMaxColRows / std::max<std::size_t>(1, d.out_pixels()));
}

// Grow-only per-thread buffers; large fresh allocations per call cost more than the GEMM at desk scale.
double* scratch(std::size_t slot, std::size_t n) {
  thread_local std::vector<double> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b.data();
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel, std::size_t stride, Padding pad) {
  if (stride == 0) throw std::invalid_argument("conv geometry: stride must be >= 1");
  ConvGeometry g;
  if (pad == Padding::same) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const long total_h = std::max<long>(static_cast<long>((g.out_h - 1) * stride + kernel) - static_cast<long>(in_h), 0);
    const long total_w = std::max<long>(static_cast<long>((g.out_w - 1) * stride + kernel) - static_cast<long>(in_w), 0);
    g.pad_top = static_cast<std::size_t>(total_h / 2);
    g.pad_left = static_cast<std::size_t>(total_w / 2);
  } else {
    if (in_h < kernel || in_w < kernel) throw ShapeError("valid convolution: input smaller than kernel");
    g.out_h = (in_h - kernel) / stride + 1;
    g.out_w = (in_w - kernel) / stride + 1;
  }
  return g;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, Padding pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  if (b.size() != d.out_c) throw ShapeError("conv2d: bias length != output channels");
  Tensor y({d.batch, d.geo.out_h, d.geo.out_w, d.out_c});
  const std::size_t per = chunk_samples(d);
  const std::size_t rows_per_sample = d.out_pixels();
  double* col = scratch(0, std::min(per, d.batch) * rows_per_sample * d.patch());

  ConstMapMat wm(w.ptr(), static_cast<Eigen::Index>(d.patch()), static_cast<Eigen::Index>(d.out_c));
  ConstMapRow bias(b.ptr(), static_cast<Eigen::Index>(d.out_c));
  for (std::size_t b0 = 0; b0 < d.batch; b0 += per) {
    const std::size_t nb = std::min(per, d.batch - b0);
    const auto rows = static_cast<Eigen::Index>(nb * rows_per_sample);
    im2col(x, d, stride, b0, nb, col);
    ConstMapMat cm(col, rows, static_cast<Eigen::Index>(d.patch()));
    MapMat ym(y.ptr() + b0 * rows_per_sample * d.out_c, rows, static_cast<Eigen::Index>(d.out_c));
    ym.noalias() = cm * wm;
    ym.rowwise() += bias;
  }
  y.check_finite("conv2d_forward");
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, std::size_t stride, Padding pad,
                            bool need_dx) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  const Shape expected{d.batch, d.geo.out_h, d.geo.out_w, d.out_c};
  if (dy.shape() != expected) {
    throw ShapeError("conv2d_backward: dy shape " + shape_string(dy.shape()) + " != " + shape_string(expected));
  }
  Conv2dGrads g{need_dx ? Tensor(x.shape()) : Tensor(), Tensor(w.shape()), Tensor({d.out_c})};
  const std::size_t per = chunk_samples(d);
  const std::size_t rows_per_sample = d.out_pixels();
  const std::size_t col_size = std::min(per, d.batch) * rows_per_sample * d.patch();
  double* col = scratch(0, col_size);
  double* dcol = need_dx ? scratch(1, col_size) : nullptr;

  ConstMapMat wm(w.ptr(), static_cast<Eigen::Index>(d.patch()), static_cast<Eigen::Index>(d.out_c));
  MapMat dwm(g.dw.ptr(), static_cast<Eigen::Index>(d.patch()), static_cast<Eigen::Index>(d.out_c));
  MapRow dbm(g.db.ptr(), static_cast<Eigen::Index>(d.out_c));
  for (std::size_t b0 = 0; b0 < d.batch; b0 += per) {
    const std::size_t nb = std::min(per, d.batch - b0);
    const auto rows = static_cast<Eigen::Index>(nb * rows_per_sample);
    im2col(x, d, stride, b0, nb, col);
    ConstMapMat cm(col, rows, static_cast<Eigen::Index>(d.patch()));
    ConstMapMat dym(dy.ptr() + b0 * rows_per_sample * d.out_c, rows, static_cast<Eigen::Index>(d.out_c));
    dwm.noalias() += cm.transpose() * dym;
    dbm += dym.colwise().sum();
    if (need_dx) {
      MapMat dcm(dcol, rows, static_cast<Eigen::Index>(d.patch()));
      dcm.noalias() = dym * wm.transpose();
      col2im_add(dcol, d, stride, b0, nb, g.dx);
    }
  }
  g.dw.check_finite("conv2d_backward dw");
  if (need_dx) g.dx.check_finite("conv2d_backward dx");
  return g;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.size() != w.dim(1)) {
    throw ShapeError("dense: x " + shape_string(x.shape()) + ", w " + shape_string(w.shape()) + ", b " +
                     shape_string(b.shape()));
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(w.dim(0));
  const auto out = static_cast<Eigen::Index>(w.dim(1));
  Tensor y({x.dim(0), w.dim(1)});
  MapMat ym(y.ptr(), batch, out);
  ym.noalias() = ConstMapMat(x.ptr(), batch, in) * ConstMapMat(w.ptr(), in, out);
  ym.rowwise() += ConstMapRow(b.ptr(), out);
  y.check_finite("dense_forward");
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, bool need_dx) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || dy.rank() != 2 || dy.dim(0) != x.dim(0) ||
      dy.dim(1) != w.dim(1)) {
    throw ShapeError("dense_backward: x " + shape_string(x.shape()) + ", w " + shape_string(w.shape()) + ", dy " +
                     shape_string(dy.shape()));
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(w.dim(0));
  const auto out = static_cast<Eigen::Index>(w.dim(1));
  DenseGrads g{need_dx ? Tensor(x.shape()) : Tensor(), Tensor(w.shape()), Tensor({w.dim(1)})};
  ConstMapMat xm(x.ptr(), batch, in);
  ConstMapMat dym(dy.ptr(), batch, out);
  MapMat(g.dw.ptr(), in, out).noalias() = xm.transpose() * dym;
  MapRow(g.db.ptr(), out) = dym.colwise().sum();
  if (need_dx) {
    MapMat(g.dx.ptr(), batch, in).noalias() = dym * ConstMapMat(w.ptr(), in, out).transpose();
    g.dx.check_finite("dense_backward dx");
  }
  g.dw.check_finite("dense_backward dw");
  return g;
}

Tensor activation_forward(const Tensor& x, Activation act) {
  Tensor y(x.shape());
  const std::size_t n = x.size();
  switch (act) {
    case Activation::identity:
      y = x;
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid(x[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
  }
  y.check_finite("activation_forward");
  return y;
}

Tensor activation_backward(const Tensor& y, const Tensor& dy, Activation act) {
  require_same_shape(y, dy, "activation_backward");
  Tensor dx(y.shape());
  const std::size_t n = y.size();
  switch (act) {
    case Activation::identity:
      dx = dy;
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
      break;
  }
  dx.check_finite("activation_backward");
  return dx;
}

Tensor dropout_forward(const Tensor& x, double rate, bool train, Rng& rng, Tensor* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (!train || rate == 0.0) {
    if (mask) *mask = Tensor(x.shape(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor m(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

Tensor dropout_backward(const Tensor& dy, const Tensor& mask) {
  require_same_shape(dy, mask, "dropout_backward");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

Tensor resize_nearest_forward(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw ShapeError("resize: input must be NHWC");
  const std::size_t n = x.dim(0), in_h = x.dim(1), in_w = x.dim(2), c = x.dim(3);
  Tensor y({n, out_h, out_w, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t iy = oy * in_h / out_h;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t ix = ox * in_w / out_w;
        const double* s = x.ptr() + ((b * in_h + iy) * in_w + ix) * c;
        std::copy(s, s + c, y.ptr() + ((b * out_h + oy) * out_w + ox) * c);
      }
    }
  }
  return y;
}

Tensor resize_nearest_backward(const Tensor& dy, std::size_t in_h, std::size_t in_w) {
  if (dy.rank() != 4) throw ShapeError("resize_backward: dy must be NHWC");
  const std::size_t n = dy.dim(0), out_h = dy.dim(1), out_w = dy.dim(2), c = dy.dim(3);
  Tensor dx({n, in_h, in_w, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t iy = oy * in_h / out_h;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t ix = ox * in_w / out_w;
        const double* s = dy.ptr() + ((b * out_h + oy) * out_w + ox) * c;
        double* t = dx.ptr() + ((b * in_h + iy) * in_w + ix) * c;
        for (std::size_t k = 0; k < c; ++k) t[k] += s[k];
      }
    }
  }
  return dx;
}

}  // namespace loft::nn
