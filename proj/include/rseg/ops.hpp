#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "rseg/errors.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Conv2dGeometry {
  Index batch, in_channels, height, width;
  Index out_channels, kernel_h, kernel_w;
  Index stride, padding;
  Index out_h, out_w;

  Index patch_size() const { return in_channels * kernel_h * kernel_w; }
  Index out_pixels() const { return out_h * out_w; }
};

template <typename Scalar>
Conv2dGeometry conv2d_geometry(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                               Index stride, Index padding) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  if (stride < 1) throw ConfigError("conv2d stride must be positive");
  if (padding < 0) throw ConfigError("conv2d padding must be non-negative");
  if (kernel.dim(1) != input.dim(1))
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input has " + std::to_string(input.dim(1)));
  Conv2dGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                   kernel.dim(0), kernel.dim(2), kernel.dim(3),
                   stride, padding, 0, 0};
  if (g.kernel_h > g.height + 2 * padding || g.kernel_w > g.width + 2 * padding)
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) + " larger than padded input " +
                     shape_string(input.shape()));
  g.out_h = (g.height + 2 * padding - g.kernel_h) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel_w) / stride + 1;
  return g;
}

namespace detail {

// Unfolds sample n into a (Cin*kh*kw) x (H'*W') patch matrix; padded taps are zero.
template <typename Scalar>
void im2col(const BasicTensor<Scalar>& input, Index n, const Conv2dGeometry& g, RowMatrix<Scalar>& cols) {
  cols.resize(g.patch_size(), g.out_pixels());
  for (Index c = 0; c < g.in_channels; ++c)
    for (Index ki = 0; ki < g.kernel_h; ++ki)
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        Scalar* row = cols.row((c * g.kernel_h + ki) * g.kernel_w + kj).data();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          Scalar* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = input.data() + ((n * g.in_channels + c) * g.height + ih) * g.width;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj;
            dst[ow] = (iw < 0 || iw >= g.width) ? Scalar(0) : src[iw];
          }
        }
      }
}

// Adjoint of im2col: scatter-adds patch gradients back onto sample n.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, Index n, const Conv2dGeometry& g, BasicTensor<Scalar>& grad_input) {
  for (Index c = 0; c < g.in_channels; ++c)
    for (Index ki = 0; ki < g.kernel_h; ++ki)
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const Scalar* row = cols.row((c * g.kernel_h + ki) * g.kernel_w + kj).data();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          Scalar* dst = grad_input.data() + ((n * g.in_channels + c) * g.height + ih) * g.width;
          const Scalar* src = row + oh * g.out_w;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> kernel_matrix(const BasicTensor<Scalar>& kernel, const Conv2dGeometry& g) {
  return Eigen::Map<const RowMatrix<Scalar>>(kernel.data(), g.out_channels, g.patch_size());
}

}  // namespace detail

/**
 * 2D cross-correlation with zero padding, NCHW input and [Cout, Cin, kh, kw] kernel.
 *
 * Each sample is unfolded with im2col and multiplied against the kernel
 * matrix, so the heavy lifting is a single Eigen GEMM per sample.
 */
template <typename Scalar>
BasicTensor<Scalar> conv2d_forward(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                                   const BasicTensor<Scalar>& bias, Index stride = 1, Index padding = 0) {
  const Conv2dGeometry g = conv2d_geometry(input, kernel, stride, padding);
  if (bias.size() != g.out_channels)
    throw ShapeError("conv2d: bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(g.out_channels));
  BasicTensor<Scalar> out({g.batch, g.out_channels, g.out_h, g.out_w});
  const auto weights = detail::kernel_matrix(kernel, g);
  RowMatrix<Scalar> cols;
  for (Index n = 0; n < g.batch; ++n) {
    detail::im2col(input, n, g, cols);
    Eigen::Map<RowMatrix<Scalar>> dst(out.data() + n * g.out_channels * g.out_pixels(), g.out_channels,
                                      g.out_pixels());
    dst.noalias() = weights * cols;
    dst.colwise() += bias.vec();
  }
  return out;
}

/// Reference nested-loop convolution; same contract as conv2d_forward, accumulates in double.
template <typename Scalar>
BasicTensor<Scalar> conv2d_forward_direct(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                                          const BasicTensor<Scalar>& bias, Index stride = 1, Index padding = 0) {
  const Conv2dGeometry g = conv2d_geometry(input, kernel, stride, padding);
  if (bias.size() != g.out_channels) throw ShapeError("conv2d: bias size mismatch");
  BasicTensor<Scalar> out({g.batch, g.out_channels, g.out_h, g.out_w});
  for (Index n = 0; n < g.batch; ++n)
    for (Index co = 0; co < g.out_channels; ++co)
      for (Index oh = 0; oh < g.out_h; ++oh)
        for (Index ow = 0; ow < g.out_w; ++ow) {
          double acc = double(bias[co]);
          for (Index ci = 0; ci < g.in_channels; ++ci)
            for (Index ki = 0; ki < g.kernel_h; ++ki)
              for (Index kj = 0; kj < g.kernel_w; ++kj) {
                const Index ih = oh * stride - padding + ki, iw = ow * stride - padding + kj;
                if (ih < 0 || ih >= g.height || iw < 0 || iw >= g.width) continue;
                acc += double(kernel(co, ci, ki, kj)) * double(input(n, ci, ih, iw));
              }
          out(n, co, oh, ow) = Scalar(acc);
        }
  return out;
}

template <typename Scalar>
struct Conv2dGrads {
  BasicTensor<Scalar> grad_input;
  BasicTensor<Scalar> grad_kernel;
  BasicTensor<Scalar> grad_bias;
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                                    const BasicTensor<Scalar>& grad_output, Index stride = 1,
                                    Index padding = 0) {
  const Conv2dGeometry g = conv2d_geometry(input, kernel, stride, padding);
  if (grad_output.shape() != Shape{g.batch, g.out_channels, g.out_h, g.out_w})
    throw ShapeError("conv2d_backward: grad_output " + shape_string(grad_output.shape()) +
                     " does not match forward output");
  Conv2dGrads<Scalar> grads{BasicTensor<Scalar>(input.shape()), BasicTensor<Scalar>(kernel.shape()),
                            BasicTensor<Scalar>({g.out_channels})};
  const auto weights = detail::kernel_matrix(kernel, g);
  Eigen::Map<RowMatrix<Scalar>> grad_weights(grads.grad_kernel.data(), g.out_channels, g.patch_size());
  RowMatrix<Scalar> cols, grad_cols;
  for (Index n = 0; n < g.batch; ++n) {
    Eigen::Map<const RowMatrix<Scalar>> upstream(grad_output.data() + n * g.out_channels * g.out_pixels(),
                                                 g.out_channels, g.out_pixels());
    detail::im2col(input, n, g, cols);
    grad_weights.noalias() += upstream * cols.transpose();
    grads.grad_bias.vec() += upstream.rowwise().sum();
    grad_cols.noalias() = weights.transpose() * upstream;
    detail::col2im(grad_cols, n, g, grads.grad_input);
  }
  return grads;
}

/// Softmax over the channel axis of an NCHW tensor, max-subtracted per pixel.
template <typename Scalar>
BasicTensor<Scalar> softmax_channels(const BasicTensor<Scalar>& logits) {
  require_rank(logits.shape(), 4, "softmax_channels");
  const Index n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  BasicTensor<Scalar> out(logits.shape());
  for (Index b = 0; b < n; ++b) {
    Eigen::Map<const RowMatrix<Scalar>> z(logits.data() + b * k * hw, k, hw);
    Eigen::Map<RowMatrix<Scalar>> p(out.data() + b * k * hw, k, hw);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> peak = z.colwise().maxCoeff();
    p.array() = (z.rowwise() - peak).array().exp();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> total = p.colwise().sum();
    p.array().rowwise() /= total.array();
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> relu_forward(const BasicTensor<Scalar>& x) {
  return BasicTensor<Scalar>(x.shape(), x.vec().cwiseMax(Scalar(0)));
}

/// Gradient passes where x > 0; the subgradient at exactly 0 is taken as 0.
template <typename Scalar>
BasicTensor<Scalar> relu_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& grad_out) {
  if (x.shape() != grad_out.shape()) throw ShapeError("relu_backward: shape mismatch");
  return BasicTensor<Scalar>(
      x.shape(), (x.vec().array() > Scalar(0)).select(grad_out.vec(), BasicTensor<Scalar>::Vector::Zero(x.size())));
}

/// 2x2 max-pool with stride 2.
template <typename Scalar>
BasicTensor<Scalar> downsample2x(const BasicTensor<Scalar>& x) {
  require_rank(x.shape(), 4, "downsample2x");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("downsample2x: odd spatial dims " + shape_string(x.shape()));
  BasicTensor<Scalar> out({n, c, h / 2, w / 2});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h / 2; ++y)
        for (Index xx = 0; xx < w / 2; ++xx)
          out(b, ch, y, xx) = std::max(std::max(x(b, ch, 2 * y, 2 * xx), x(b, ch, 2 * y, 2 * xx + 1)),
                                       std::max(x(b, ch, 2 * y + 1, 2 * xx), x(b, ch, 2 * y + 1, 2 * xx + 1)));
  return out;
}

/// Routes each pooled gradient to the first maximal element of its window (raster order).
template <typename Scalar>
BasicTensor<Scalar> downsample2x_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& grad_out) {
  require_rank(x.shape(), 4, "downsample2x_backward");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("downsample2x_backward: odd spatial dims");
  if (grad_out.shape() != Shape{n, c, h / 2, w / 2}) throw ShapeError("downsample2x_backward: shape mismatch");
  BasicTensor<Scalar> grad(x.shape());
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h / 2; ++y)
        for (Index xx = 0; xx < w / 2; ++xx) {
          Index by = 2 * y, bx = 2 * xx;
          for (Index dy = 0; dy < 2; ++dy)
            for (Index dx = 0; dx < 2; ++dx)
              if (x(b, ch, 2 * y + dy, 2 * xx + dx) > x(b, ch, by, bx)) {
                by = 2 * y + dy;
                bx = 2 * xx + dx;
              }
          grad(b, ch, by, bx) += grad_out(b, ch, y, xx);
        }
  return grad;
}

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
BasicTensor<Scalar> upsample2x(const BasicTensor<Scalar>& x) {
  require_rank(x.shape(), 4, "upsample2x");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<Scalar> out({n, c, 2 * h, 2 * w});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < 2 * h; ++y)
        for (Index xx = 0; xx < 2 * w; ++xx) out(b, ch, y, xx) = x(b, ch, y / 2, xx / 2);
  return out;
}

/// Adjoint of upsample2x: sums each 2x2 block.
template <typename Scalar>
BasicTensor<Scalar> upsample2x_backward(const BasicTensor<Scalar>& grad_out) {
  require_rank(grad_out.shape(), 4, "upsample2x_backward");
  const Index n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2), w = grad_out.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("upsample2x_backward: odd spatial dims");
  BasicTensor<Scalar> grad({n, c, h / 2, w / 2});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) grad(b, ch, y / 2, xx / 2) += grad_out(b, ch, y, xx);
  return grad;
}

/// Concatenates two NCHW tensors along the channel axis.
template <typename Scalar>
BasicTensor<Scalar> concat_channels(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  require_rank(a.shape(), 4, "concat_channels");
  require_rank(b.shape(), 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const Index n = a.dim(0), hw = a.dim(2) * a.dim(3), ca = a.dim(1) * hw, cb = b.dim(1) * hw;
  BasicTensor<Scalar> out({n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  for (Index s = 0; s < n; ++s) {
    out.vec().segment(s * (ca + cb), ca) = a.vec().segment(s * ca, ca);
    out.vec().segment(s * (ca + cb) + ca, cb) = b.vec().segment(s * cb, cb);
  }
  return out;
}

/// Inverse of concat_channels: the first `channels_a` channels, then the rest.
template <typename Scalar>
std::pair<BasicTensor<Scalar>, BasicTensor<Scalar>> split_channels(const BasicTensor<Scalar>& x, Index channels_a) {
  require_rank(x.shape(), 4, "split_channels");
  if (channels_a < 0 || channels_a > x.dim(1)) throw ShapeError("split_channels: bad split point");
  const Index n = x.dim(0), hw = x.dim(2) * x.dim(3);
  const Index ca = channels_a * hw, cb = (x.dim(1) - channels_a) * hw;
  BasicTensor<Scalar> a({n, channels_a, x.dim(2), x.dim(3)});
  BasicTensor<Scalar> b({n, x.dim(1) - channels_a, x.dim(2), x.dim(3)});
  for (Index s = 0; s < n; ++s) {
    a.vec().segment(s * ca, ca) = x.vec().segment(s * (ca + cb), ca);
    b.vec().segment(s * cb, cb) = x.vec().segment(s * (ca + cb) + ca, cb);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace rseg
