#include <cmath>
#include <string>

#include "sisc/tensor.hpp"

namespace sisc {

template <typename Real>
BatchNormParams<Real> BatchNormParams<Real>::identity(std::size_t channels, double momentum,
                                                      double epsilon) {
  BatchNormParams p;
  p.gamma.assign(channels, Real(1));
  p.beta.assign(channels, Real(0));
  p.running_mean.assign(channels, Real(0));
  p.running_var.assign(channels, Real(1));
  p.momentum = momentum;
  p.epsilon = epsilon;
  return p;
}

template <typename Real>
void BatchNormParams<Real>::validate() const {
  const std::size_t c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ConfigError("batchnorm parameter vectors disagree on channel count");
  }
  if (!(epsilon > 0.0)) throw ConfigError("batchnorm epsilon must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ConfigError("batchnorm momentum must lie in (0, 1), got " + std::to_string(momentum));
  }
  for (Real v : running_var) {
    if (v < Real(0)) throw ConfigError("batchnorm running variance is negative");
  }
}

template <typename Real>
BatchStats<Real> batch_stats(const Tensor<Real>& input) {
  const Shape& s = input.shape();
  const double m = static_cast<double>(s.n * s.plane());
  BatchStats<Real> stats;
  stats.mean.resize(s.c);
  stats.var.resize(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      for (Real x : input.plane(n, c)) sum += x;
    }
    const double mean = sum / m;
    double sq = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      for (Real x : input.plane(n, c)) sq += (x - mean) * (x - mean);
    }
    stats.mean[c] = static_cast<Real>(mean);
    stats.var[c] = static_cast<Real>(sq / m);
  }
  return stats;
}

template <typename Real>
BatchNormResult<Real> batchnorm_fwd(const Tensor<Real>& input, BatchNormParams<Real>& params,
                                    Mode mode) {
  params.validate();
  const Shape& s = input.shape();
  if (s.c != params.channels()) {
    throw ConfigError("batchnorm: input " + s.str() + " has " + std::to_string(s.c) +
                      " channels, parameters have " + std::to_string(params.channels()));
  }
  BatchNormResult<Real> result;
  result.output = Tensor<Real>(s);
  std::vector<Real> mean = params.running_mean;
  std::vector<Real> var = params.running_var;
  if (mode == Mode::train) {
    result.stats = batch_stats(input);
    mean = result.stats.mean;
    var = result.stats.var;
    const double m = params.momentum;
    for (std::size_t c = 0; c < s.c; ++c) {
      params.running_mean[c] =
          static_cast<Real>(m * params.running_mean[c] + (1.0 - m) * result.stats.mean[c]);
      params.running_var[c] =
          static_cast<Real>(m * params.running_var[c] + (1.0 - m) * result.stats.var[c]);
    }
  }
  for (std::size_t c = 0; c < s.c; ++c) {
    const Real inv_std = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(var[c]) + params.epsilon));
    const Real scale = params.gamma[c] * inv_std;
    const Real mu = mean[c];
    const Real shift = params.beta[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      auto src = input.plane(n, c);
      auto dst = result.output.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - mu) * scale + shift;
    }
  }
  ensure_finite(result.output, "batchnorm_fwd");
  return result;
}

template <typename Real>
BatchNormGrads<Real> batchnorm_bwd(const Tensor<Real>& input, const BatchNormParams<Real>& params,
                                   const BatchStats<Real>& stats, const Tensor<Real>& grad_out) {
  const Shape& s = input.shape();
  if (grad_out.shape() != s) {
    throw ConfigError("batchnorm_bwd: grad_out " + grad_out.shape().str() +
                      " does not match input " + s.str());
  }
  if (s.c != params.channels() || stats.mean.size() != s.c || stats.var.size() != s.c) {
    throw ConfigError("batchnorm_bwd: channel count mismatch");
  }
  const double m = static_cast<double>(s.n * s.plane());
  BatchNormGrads<Real> grads;
  grads.input = Tensor<Real>(s);
  grads.gamma.assign(s.c, Real(0));
  grads.beta.assign(s.c, Real(0));
  for (std::size_t c = 0; c < s.c; ++c) {
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(stats.var[c]) + params.epsilon);
    const double mu = stats.mean[c];
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      auto x = input.plane(n, c);
      auto dy = grad_out.plane(n, c);
      for (std::size_t i = 0; i < x.size(); ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * (x[i] - mu) * inv_std;
      }
    }
    grads.beta[c] = static_cast<Real>(sum_dy);
    grads.gamma[c] = static_cast<Real>(sum_dy_xhat);
    // dx = gamma*inv_std/M * (M*dy - sum(dy) - xhat*sum(dy*xhat))
    const double k = params.gamma[c] * inv_std / m;
    for (std::size_t n = 0; n < s.n; ++n) {
      auto x = input.plane(n, c);
      auto dy = grad_out.plane(n, c);
      auto dx = grads.input.plane(n, c);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double xhat = (x[i] - mu) * inv_std;
        dx[i] = static_cast<Real>(k * (m * dy[i] - sum_dy - xhat * sum_dy_xhat));
      }
    }
  }
  ensure_finite(grads.input, "batchnorm_bwd");
  return grads;
}

template <typename Real>
BatchNormGrads<Real> batchnorm_bwd(const Tensor<Real>& input, const BatchNormParams<Real>& params,
                                   const Tensor<Real>& grad_out) {
  return batchnorm_bwd(input, params, batch_stats(input), grad_out);
}

template <typename Real>
std::vector<Real> batchnorm_infer_scale(const BatchNormParams<Real>& params) {
  std::vector<Real> scale(params.channels());
  for (std::size_t c = 0; c < scale.size(); ++c) {
    scale[c] = static_cast<Real>(
        params.gamma[c] / std::sqrt(static_cast<double>(params.running_var[c]) + params.epsilon));
  }
  return scale;
}

#define SISC_INSTANTIATE_BN(Real)                                                              \
  template struct BatchNormParams<Real>;                                                       \
  template BatchStats<Real> batch_stats(const Tensor<Real>&);                                  \
  template BatchNormResult<Real> batchnorm_fwd(const Tensor<Real>&, BatchNormParams<Real>&,    \
                                               Mode);                                          \
  template BatchNormGrads<Real> batchnorm_bwd(const Tensor<Real>&, const BatchNormParams<Real>&, \
                                              const BatchStats<Real>&, const Tensor<Real>&);   \
  template BatchNormGrads<Real> batchnorm_bwd(const Tensor<Real>&, const BatchNormParams<Real>&, \
                                              const Tensor<Real>&);                            \
  template std::vector<Real> batchnorm_infer_scale(const BatchNormParams<Real>&);

SISC_INSTANTIATE_BN(float)
SISC_INSTANTIATE_BN(double)

}  // namespace sisc
