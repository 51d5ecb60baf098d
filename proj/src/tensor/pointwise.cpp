#include <algorithm>
#include <cmath>
#include <string>

#include "sisc/tensor.hpp"

namespace sisc {

template <typename Real>
MaskedResult<Real> relu(const Tensor<Real>& input) {
  MaskedResult<Real> r{Tensor<Real>(input.shape()), Mask(input.size())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > Real(0);
    r.mask[i] = on ? 1 : 0;
    r.output[i] = on ? input[i] : Real(0);
  }
  return r;
}

template <typename Real>
Tensor<Real> relu_bwd(const Tensor<Real>& grad_out, const Mask& mask) {
  if (mask.size() != grad_out.size()) throw ConfigError("relu_bwd: mask size mismatch");
  Tensor<Real> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] ? grad_out[i] : Real(0);
  return g;
}

template <typename Real>
MaskedResult<Real> dropout(const Tensor<Real>& input, double rate, Rng& rng, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::infer || rate == 0.0) {
    return {input, Mask(input.size(), 1)};
  }
  const Real scale = static_cast<Real>(1.0 / (1.0 - rate));
  MaskedResult<Real> r{Tensor<Real>(input.shape()), Mask(input.size())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool keep = !rng.bernoulli(rate);
    r.mask[i] = keep ? 1 : 0;
    r.output[i] = keep ? input[i] * scale : Real(0);
  }
  return r;
}

template <typename Real>
Tensor<Real> dropout_bwd(const Tensor<Real>& grad_out, const Mask& mask, double rate) {
  if (mask.size() != grad_out.size()) throw ConfigError("dropout_bwd: mask size mismatch");
  const Real scale = static_cast<Real>(1.0 / (1.0 - rate));
  Tensor<Real> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] ? grad_out[i] * scale : Real(0);
  return g;
}

template <typename Real>
Tensor<Real> gap(const Tensor<Real>& input) {
  const Shape& s = input.shape();
  if (s.h < 1 || s.w < 1) throw ConfigError("gap: empty spatial extent");
  Tensor<Real> out(Shape{s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (Real x : input.plane(n, c)) sum += x;
      out(n, c, 0, 0) = static_cast<Real>(sum / static_cast<double>(s.plane()));
    }
  }
  return out;
}

template <typename Real>
Tensor<Real> gap_bwd(const Tensor<Real>& grad_out, const Shape& input_shape) {
  if (grad_out.shape() != Shape{input_shape.n, input_shape.c, 1, 1}) {
    throw ConfigError("gap_bwd: grad shape " + grad_out.shape().str() + " does not match " +
                      input_shape.str());
  }
  Tensor<Real> g(input_shape);
  const Real inv = static_cast<Real>(1.0 / static_cast<double>(input_shape.plane()));
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t c = 0; c < input_shape.c; ++c) {
      const Real v = grad_out(n, c, 0, 0) * inv;
      auto p = g.plane(n, c);
      std::fill(p.begin(), p.end(), v);
    }
  }
  return g;
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits) {
  const Shape& s = logits.shape();
  if (s.h != 1 || s.w != 1) throw ConfigError("softmax expects (N, C, 1, 1), got " + s.str());
  Tensor<Real> probs(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < s.c; ++c) mx = std::max<double>(mx, logits(n, c, 0, 0));
    double z = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) z += std::exp(logits(n, c, 0, 0) - mx);
    for (std::size_t c = 0; c < s.c; ++c) {
      probs(n, c, 0, 0) = static_cast<Real>(std::exp(logits(n, c, 0, 0) - mx) / z);
    }
  }
  ensure_finite(probs, "softmax");
  return probs;
}

template <typename Real>
SoftmaxXent<Real> softmax_xent(const Tensor<Real>& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.h != 1 || s.w != 1) throw ConfigError("softmax_xent expects (N, C, 1, 1), got " + s.str());
  if (labels.size() != s.n) {
    throw DataError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " +
                    std::to_string(s.n));
  }
  for (std::size_t n = 0; n < s.n; ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= s.c) {
      throw DataError("label " + std::to_string(labels[n]) + " at sample " + std::to_string(n) +
                      " outside [0, " + std::to_string(s.c) + ")");
    }
  }
  SoftmaxXent<Real> r;
  r.probs = Tensor<Real>(s);
  r.grad_logits = Tensor<Real>(s);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < s.c; ++c) mx = std::max<double>(mx, logits(n, c, 0, 0));
    double z = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) z += std::exp(logits(n, c, 0, 0) - mx);
    const double log_z = std::log(z);
    for (std::size_t c = 0; c < s.c; ++c) {
      const double shifted = logits(n, c, 0, 0) - mx;
      const double p = std::exp(shifted - log_z);
      r.probs(n, c, 0, 0) = static_cast<Real>(p);
      const double onehot = static_cast<int>(c) == labels[n] ? 1.0 : 0.0;
      r.grad_logits(n, c, 0, 0) = static_cast<Real>((p - onehot) * inv_n);
      if (onehot != 0.0) loss -= shifted - log_z;
    }
  }
  r.loss = loss * inv_n;
  if (!std::isfinite(r.loss)) throw NumericError("softmax_xent: non-finite loss");
  ensure_finite(r.probs, "softmax_xent");
  return r;
}

#define SISC_INSTANTIATE_POINTWISE(Real)                                                      \
  template MaskedResult<Real> relu(const Tensor<Real>&);                                      \
  template Tensor<Real> relu_bwd(const Tensor<Real>&, const Mask&);                           \
  template MaskedResult<Real> dropout(const Tensor<Real>&, double, Rng&, Mode);               \
  template Tensor<Real> dropout_bwd(const Tensor<Real>&, const Mask&, double);                \
  template Tensor<Real> gap(const Tensor<Real>&);                                             \
  template Tensor<Real> gap_bwd(const Tensor<Real>&, const Shape&);                           \
  template Tensor<Real> softmax(const Tensor<Real>&);                                         \
  template SoftmaxXent<Real> softmax_xent(const Tensor<Real>&, std::span<const int>);

SISC_INSTANTIATE_POINTWISE(float)
SISC_INSTANTIATE_POINTWISE(double)

}  // namespace sisc
