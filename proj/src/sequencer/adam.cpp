#include <cmath>

#include "sisc/sequencer.hpp"

namespace sisc {

template <typename Real>
void adam_step(std::span<const NamedSpan<Real>> params, const Gradients<Real>& grads,
               AdamState<Real>& state) {
  if (grads.values.size() != params.size()) {
    throw ConfigError("adam_step: " + std::to_string(grads.values.size()) + " gradients for " +
                      std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.values[i].size() != params[i].values.size()) {
      throw ConfigError("adam_step: gradient of " + params[i].name + " has the wrong length");
    }
    for (Real g : grads.values[i]) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient for " + params[i].name);
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.values.size(), Real(0));
      state.v.emplace_back(p.values.size(), Real(0));
    }
  }
  if (state.m.size() != params.size()) throw ConfigError("adam_step: state does not match parameters");

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads.values[i];
    auto p = params[i].values;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      const double vk = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      p[k] = static_cast<Real>(p[k] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template <typename Real>
void adam_step(Sequencer<Real>& model, const Gradients<Real>& grads, AdamState<Real>& state) {
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size() && i < grads.names.size(); ++i) {
    if (params[i].name != grads.names[i]) {
      throw InternalError("adam_step: gradient " + grads.names[i] + " does not line up with " +
                          params[i].name);
    }
  }
  adam_step<Real>(std::span<const NamedSpan<Real>>(params), grads, state);
  model.version += 1;
}

template void adam_step(std::span<const NamedSpan<float>>, const Gradients<float>&, AdamState<float>&);
template void adam_step(std::span<const NamedSpan<double>>, const Gradients<double>&,
                        AdamState<double>&);
template void adam_step(Sequencer<float>&, const Gradients<float>&, AdamState<float>&);
template void adam_step(Sequencer<double>&, const Gradients<double>&, AdamState<double>&);

}  // namespace sisc
