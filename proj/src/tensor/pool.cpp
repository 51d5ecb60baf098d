#include <string>

#include "sisc/tensor.hpp"

namespace sisc {

template <typename Real>
PoolResult<Real> maxpool_fwd(const Tensor<Real>& input, std::size_t window) {
  const Shape& in = input.shape();
  if (window < 1) throw ConfigError("pooling window must be positive");
  if (in.h % window != 0 || in.w % window != 0) {
    throw ConfigError("maxpool: extent " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                      " is not divisible by window " + std::to_string(window));
  }
  const Shape out_shape{in.n, in.c, in.h / window, in.w / window};
  PoolResult<Real> result;
  result.output = Tensor<Real>(out_shape);
  result.switches.window = window;
  result.switches.stride = window;
  result.switches.input_shape = in;
  result.switches.output_shape = out_shape;
  result.switches.argmax.resize(out_shape.count());

  std::size_t o = 0;
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      for (std::size_t i = 0; i < out_shape.h; ++i) {
        for (std::size_t j = 0; j < out_shape.w; ++j, ++o) {
          std::size_t best = input.index(n, c, i * window, j * window);
          Real best_value = input[best];
          for (std::size_t u = 0; u < window; ++u) {
            for (std::size_t v = 0; v < window; ++v) {
              const std::size_t idx = input.index(n, c, i * window + u, j * window + v);
              // strict comparison keeps the first maximum in scan order
              if (input[idx] > best_value) {
                best_value = input[idx];
                best = idx;
              }
            }
          }
          result.output[o] = best_value;
          result.switches.argmax[o] = best;
        }
      }
    }
  }
  return result;
}

template <typename Real>
Tensor<Real> unpool(const Tensor<Real>& pooled, const PoolSwitches& switches,
                    const Shape& out_shape) {
  if (pooled.shape() != switches.output_shape || switches.argmax.size() != pooled.size()) {
    throw ConfigError("unpool: pooled shape " + pooled.shape().str() +
                      " does not match switches " + switches.output_shape.str());
  }
  if (out_shape != switches.input_shape) {
    throw ConfigError("unpool: target shape " + out_shape.str() +
                      " inconsistent with pooled input " + switches.input_shape.str());
  }
  Tensor<Real> out(out_shape);
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const std::size_t idx = switches.argmax[i];
    if (idx >= out.size()) {
      throw InternalError("unpool: switch index " + std::to_string(idx) + " outside " +
                          out_shape.str());
    }
    out[idx] = pooled[i];
  }
  return out;
}

template PoolResult<float> maxpool_fwd(const Tensor<float>&, std::size_t);
template PoolResult<double> maxpool_fwd(const Tensor<double>&, std::size_t);
template Tensor<float> unpool(const Tensor<float>&, const PoolSwitches&, const Shape&);
template Tensor<double> unpool(const Tensor<double>&, const PoolSwitches&, const Shape&);

}  // namespace sisc
