#include <algorithm>
#include <string>

#include "sisc/tensor.hpp"

namespace sisc {

namespace {

struct Geometry {
  std::size_t in_c, in_h, in_w;
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t k() const { return in_c * kh * kw; }
  std::size_t p() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename Real>
Geometry geometry(const Shape& in, const Shape& out, const ConvParams<Real>& params) {
  return Geometry{in.c,           in.h,           in.w,
                  params.kernel_h(), params.kernel_w(), params.stride,
                  params.padding, out.h,          out.w};
}

// Unfolds one sample (C, H, W) into a (C*kH*kW, OH*OW) matrix.
template <typename Real>
void im2col(const Real* image, const Geometry& g, Real* col) {
  const std::size_t plane = g.p();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      for (std::size_t v = 0; v < g.kw; ++v) {
        Real* row = col + ((c * g.kh + u) * g.kw + v) * plane;
        for (std::size_t i = 0; i < g.out_h; ++i) {
          const long y = static_cast<long>(i * g.stride + u) - static_cast<long>(g.pad);
          Real* dst = row + i * g.out_w;
          if (y < 0 || y >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, Real(0));
            continue;
          }
          const Real* src = image + (c * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
          for (std::size_t j = 0; j < g.out_w; ++j) {
            const long x = static_cast<long>(j * g.stride + v) - static_cast<long>(g.pad);
            dst[j] = (x < 0 || x >= static_cast<long>(g.in_w))
                         ? Real(0)
                         : src[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the image.
template <typename Real>
void col2im(const Real* col, const Geometry& g, Real* image) {
  const std::size_t plane = g.p();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      for (std::size_t v = 0; v < g.kw; ++v) {
        const Real* row = col + ((c * g.kh + u) * g.kw + v) * plane;
        for (std::size_t i = 0; i < g.out_h; ++i) {
          const long y = static_cast<long>(i * g.stride + u) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.in_h)) continue;
          Real* dst = image + (c * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
          const Real* src = row + i * g.out_w;
          for (std::size_t j = 0; j < g.out_w; ++j) {
            const long x = static_cast<long>(j * g.stride + v) - static_cast<long>(g.pad);
            if (x >= 0 && x < static_cast<long>(g.in_w)) dst[x] += src[j];
          }
        }
      }
    }
  }
}

template <typename Real>
Real sum8(const Real* x, std::size_t n) {
  Real acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += x[i + j];
  }
  for (; i < n; ++i) acc[i & 7] += x[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// grad_input = conv^T(grad_out); shared by conv2d_bwd and deconv_project.
template <typename Real>
Tensor<Real> transpose_conv(const Tensor<Real>& grad_out, const ConvParams<Real>& params,
                            const Shape& in_shape) {
  const Geometry g = geometry(in_shape, grad_out.shape(), params);
  const std::size_t K = g.k(), P = g.p();
  const std::size_t cout = params.out_channels();
  const Real* w = params.weights.data().data();
  Tensor<Real> grad_in(in_shape);
  std::vector<Real> gcol(K * P);
  for (std::size_t n = 0; n < in_shape.n; ++n) {
    Real* dst = g.pointwise() ? grad_in.data().data() + n * in_shape.per_sample() : gcol.data();
    std::fill(dst, dst + K * P, Real(0));
    const Real* gn = grad_out.data().data() + n * cout * P;
    for (std::size_t o = 0; o < cout; ++o) {
      const Real* grow = gn + o * P;
      for (std::size_t k = 0; k < K; ++k) {
        const Real wk = w[o * K + k];
        Real* crow = dst + k * P;
        for (std::size_t p = 0; p < P; ++p) crow[p] += wk * grow[p];
      }
    }
    if (!g.pointwise()) col2im(gcol.data(), g, grad_in.data().data() + n * in_shape.per_sample());
  }
  return grad_in;
}

}  // namespace

template <typename Real>
void ConvParams<Real>::validate() const {
  const Shape& s = weights.shape();
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw ConfigError("conv weights must have positive extents, got " + s.str());
  }
  if (bias.size() != s.n) {
    throw ConfigError("conv bias length " + std::to_string(bias.size()) +
                      " does not match " + std::to_string(s.n) + " output channels");
  }
  if (stride < 1) throw ConfigError("conv stride must be positive");
}

template <typename Real>
Shape ConvParams<Real>::output_shape(const Shape& in) const {
  validate();
  if (in.c != in_channels()) {
    throw ConfigError("conv input " + in.str() + " has " + std::to_string(in.c) +
                      " channels but weights " + weights.shape().str() + " expect " +
                      std::to_string(in_channels()));
  }
  const long oh = (static_cast<long>(in.h) + 2 * static_cast<long>(padding) -
                   static_cast<long>(kernel_h())) /
                      static_cast<long>(stride) +
                  1;
  const long ow = (static_cast<long>(in.w) + 2 * static_cast<long>(padding) -
                   static_cast<long>(kernel_w())) /
                      static_cast<long>(stride) +
                  1;
  if (static_cast<long>(in.h) + 2 * static_cast<long>(padding) < static_cast<long>(kernel_h()) ||
      static_cast<long>(in.w) + 2 * static_cast<long>(padding) < static_cast<long>(kernel_w()) ||
      oh < 1 || ow < 1) {
    throw ConfigError("conv of input " + in.str() + " with weights " + weights.shape().str() +
                      " yields an empty output");
  }
  return Shape{in.n, out_channels(), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
}

template <typename Real>
Tensor<Real> conv2d_fwd(const Tensor<Real>& input, const ConvParams<Real>& params) {
  const Shape out_shape = params.output_shape(input.shape());
  const Geometry g = geometry(input.shape(), out_shape, params);
  const std::size_t K = g.k(), P = g.p();
  const std::size_t cout = params.out_channels();
  const Real* w = params.weights.data().data();
  Tensor<Real> out(out_shape);
  std::vector<Real> col(g.pointwise() ? 0 : K * P);
  for (std::size_t n = 0; n < out_shape.n; ++n) {
    const Real* image = input.data().data() + n * input.shape().per_sample();
    const Real* cols = image;
    if (!g.pointwise()) {
      im2col(image, g, col.data());
      cols = col.data();
    }
    Real* on = out.data().data() + n * cout * P;
    for (std::size_t o = 0; o < cout; ++o) {
      Real* row = on + o * P;
      std::fill(row, row + P, params.bias[o]);
      for (std::size_t k = 0; k < K; ++k) {
        const Real wk = w[o * K + k];
        const Real* crow = cols + k * P;
        for (std::size_t p = 0; p < P; ++p) row[p] += wk * crow[p];
      }
    }
  }
  ensure_finite(out, "conv2d_fwd");
  return out;
}

template <typename Real>
ConvGrads<Real> conv2d_bwd(const Tensor<Real>& input, const ConvParams<Real>& params,
                           const Tensor<Real>& grad_out, bool want_input_grad) {
  const Shape out_shape = params.output_shape(input.shape());
  if (grad_out.shape() != out_shape) {
    throw ConfigError("conv2d_bwd: grad_out shape " + grad_out.shape().str() +
                      " does not match forward output " + out_shape.str());
  }
  const Geometry g = geometry(input.shape(), out_shape, params);
  const std::size_t K = g.k(), P = g.p();
  const std::size_t cout = params.out_channels();

  ConvGrads<Real> grads;
  grads.weights = Tensor<Real>(params.weights.shape());
  grads.bias.assign(cout, Real(0));
  Real* gw = grads.weights.data().data();
  std::vector<Real> col(g.pointwise() ? 0 : K * P);
  for (std::size_t n = 0; n < out_shape.n; ++n) {
    const Real* image = input.data().data() + n * input.shape().per_sample();
    const Real* cols = image;
    if (!g.pointwise()) {
      im2col(image, g, col.data());
      cols = col.data();
    }
    const Real* gn = grad_out.data().data() + n * cout * P;
    for (std::size_t o = 0; o < cout; ++o) {
      const Real* grow = gn + o * P;
      grads.bias[o] += sum8(grow, P);
      const std::span<const Real> gspan(grow, P);
      for (std::size_t k = 0; k < K; ++k) {
        gw[o * K + k] += dot<Real>(gspan, std::span<const Real>(cols + k * P, P));
      }
    }
  }
  if (want_input_grad) grads.input = transpose_conv(grad_out, params, input.shape());
  ensure_finite(grads.weights, "conv2d_bwd weights");
  ensure_finite<Real>(grads.bias, "conv2d_bwd bias");
  if (want_input_grad) ensure_finite(grads.input, "conv2d_bwd input");
  return grads;
}

template <typename Real>
Tensor<Real> deconv_project(const Tensor<Real>& featmaps, const ConvParams<Real>& params,
                            std::optional<std::pair<std::size_t, std::size_t>> input_hw) {
  params.validate();
  const Shape& fs = featmaps.shape();
  if (fs.c != params.out_channels()) {
    throw ConfigError("deconv_project: feature maps " + fs.str() + " have " +
                      std::to_string(fs.c) + " channels, layer produces " +
                      std::to_string(params.out_channels()));
  }
  Shape in{fs.n, params.in_channels(), 0, 0};
  if (input_hw) {
    in.h = input_hw->first;
    in.w = input_hw->second;
  } else {
    const long h = (static_cast<long>(fs.h) - 1) * static_cast<long>(params.stride) -
                   2 * static_cast<long>(params.padding) + static_cast<long>(params.kernel_h());
    const long w = (static_cast<long>(fs.w) - 1) * static_cast<long>(params.stride) -
                   2 * static_cast<long>(params.padding) + static_cast<long>(params.kernel_w());
    if (h < 1 || w < 1) throw ConfigError("deconv_project: empty projection for " + fs.str());
    in.h = static_cast<std::size_t>(h);
    in.w = static_cast<std::size_t>(w);
  }
  const Shape expect = params.output_shape(in);
  if (expect != fs) {
    throw ConfigError("deconv_project: input extent " + in.str() + " maps to " + expect.str() +
                      ", not " + fs.str());
  }
  Tensor<Real> out = transpose_conv(featmaps, params, in);
  ensure_finite(out, "deconv_project");
  return out;
}

template struct ConvParams<float>;
template struct ConvParams<double>;
template Tensor<float> conv2d_fwd(const Tensor<float>&, const ConvParams<float>&);
template Tensor<double> conv2d_fwd(const Tensor<double>&, const ConvParams<double>&);
template ConvGrads<float> conv2d_bwd(const Tensor<float>&, const ConvParams<float>&,
                                     const Tensor<float>&, bool);
template ConvGrads<double> conv2d_bwd(const Tensor<double>&, const ConvParams<double>&,
                                      const Tensor<double>&, bool);
template Tensor<float> deconv_project(const Tensor<float>&, const ConvParams<float>&,
                                      std::optional<std::pair<std::size_t, std::size_t>>);
template Tensor<double> deconv_project(const Tensor<double>&, const ConvParams<double>&,
                                       std::optional<std::pair<std::size_t, std::size_t>>);

}  // namespace sisc
