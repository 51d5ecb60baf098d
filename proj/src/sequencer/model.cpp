#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>

#include "sisc/sequencer.hpp"

namespace sisc {

namespace {

std::uint64_t next_instance_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter++;
}

template <typename Real>
ConvParams<Real> he_conv(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng) {
  ConvParams<Real> p;
  const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  p.weights = Tensor<Real>::random_normal(Shape{cout, cin, k, k}, rng, stddev);
  p.bias.assign(cout, Real(0));
  p.stride = 1;
  p.padding = k / 2;
  return p;
}

template <typename Real, typename Model>
auto collect_tensors(Model& model) {
  using Elem = std::conditional_t<std::is_const_v<Model>, const Real, Real>;
  std::vector<NamedSpan<Elem>> out;
  for (std::size_t ci = 0; ci < model.cells.size(); ++ci) {
    auto& cell = model.cells[ci];
    for (std::size_t si = 0; si < cell.stages.size(); ++si) {
      auto& st = cell.stages[si];
      const std::string p = "cell" + std::to_string(ci) + ".stage" + std::to_string(si);
      out.push_back({p + ".conv.weight", st.conv.weights.data(), true});
      out.push_back({p + ".conv.bias", std::span<Elem>(st.conv.bias), true});
      out.push_back({p + ".bn.gamma", std::span<Elem>(st.bn.gamma), true});
      out.push_back({p + ".bn.beta", std::span<Elem>(st.bn.beta), true});
      out.push_back({p + ".bn.running_mean", std::span<Elem>(st.bn.running_mean), false});
      out.push_back({p + ".bn.running_var", std::span<Elem>(st.bn.running_var), false});
    }
  }
  out.push_back({"head.weight", model.head.weights.data(), true});
  out.push_back({"head.bias", std::span<Elem>(model.head.bias), true});
  return out;
}

}  // namespace

template <typename Real>
std::vector<NamedSpan<Real>> Sequencer<Real>::tensors() {
  return collect_tensors<Real>(*this);
}

template <typename Real>
std::vector<NamedSpan<const Real>> Sequencer<Real>::tensors() const {
  return collect_tensors<Real>(*this);
}

template <typename Real>
std::vector<NamedSpan<Real>> Sequencer<Real>::parameters() {
  auto all = tensors();
  std::erase_if(all, [](const auto& t) { return !t.trainable; });
  return all;
}

template <typename Real>
std::size_t Sequencer<Real>::layer_count() const {
  std::size_t n = 1;
  for (const auto& c : cells) n += c.stages.size();
  return n;
}

template <typename Real>
std::size_t ForwardTrace<Real>::layer_count() const {
  std::size_t n = 1;
  for (const auto& c : cells) n += c.stages.size();
  return n;
}

template <typename Real>
Sequencer<Real> build_sequencer(const SequencerConfig& config, Rng& rng) {
  config.validate();
  Sequencer<Real> model;
  model.config = config;
  model.instance_id = next_instance_id();
  std::size_t cin = config.input_channels;
  auto make_cell = [&](const CellConfig& cfg, bool pooled) {
    Cell<Real> cell;
    cell.pooled = pooled;
    for (std::size_t j = 0; j < cfg.conv_count; ++j) {
      ConvStage<Real> st;
      st.conv = he_conv<Real>(cin, cfg.channels, cfg.kernel, rng);
      st.bn = BatchNormParams<Real>::identity(cfg.channels, cfg.bn_momentum, config.bn_epsilon);
      st.dropout_rate = cfg.dropout_rate;
      cell.stages.push_back(std::move(st));
      cin = cfg.channels;
    }
    return cell;
  };
  for (const auto& cfg : config.cells) model.cells.push_back(make_cell(cfg, true));
  model.cells.push_back(make_cell(config.final_cell, false));
  model.head = he_conv<Real>(cin, config.class_count, 1, rng);
  return model;
}

namespace {

template <typename Real>
void check_batch(const SequencerConfig& config, const Tensor<Real>& batch) {
  const Shape& s = batch.shape();
  if (s.n < 1 || s.c != config.input_channels || s.h != config.input_size ||
      s.w != config.input_size) {
    throw DataError("batch " + s.str() + " does not match model input (N, " +
                    std::to_string(config.input_channels) + ", " +
                    std::to_string(config.input_size) + ", " + std::to_string(config.input_size) +
                    ")");
  }
}

// Shared forward path. `running` receives running-statistics updates in train
// mode (null: leave them alone); `rng` draws fresh dropout masks unless
// `recorded` supplies them.
template <typename Real>
ForwardResult<Real> run_forward(const Sequencer<Real>& model, Sequencer<Real>* running,
                                const Tensor<Real>& batch, Mode mode, Rng* rng,
                                const ForwardTrace<Real>* recorded) {
  check_batch(model.config, batch);
  ForwardResult<Real> r;
  ForwardTrace<Real>& tr = r.trace;
  tr.mode = mode;
  tr.instance_id = model.instance_id;
  tr.version = model.version;
  tr.input = batch;
  Tensor<Real> x = batch;
  for (std::size_t ci = 0; ci < model.cells.size(); ++ci) {
    const Cell<Real>& cell = model.cells[ci];
    CellTrace<Real> ct;
    for (std::size_t si = 0; si < cell.stages.size(); ++si) {
      const ConvStage<Real>& st = cell.stages[si];
      StageTrace<Real> s;
      s.input = std::move(x);
      s.conv_out = conv2d_fwd(s.input, st.conv);

      BatchNormResult<Real> bn;
      if (mode == Mode::train && running != nullptr) {
        bn = batchnorm_fwd(s.conv_out, running->cells[ci].stages[si].bn, mode);
      } else {
        BatchNormParams<Real> scratch = st.bn;
        bn = batchnorm_fwd(s.conv_out, scratch, mode);
      }
      s.stats = std::move(bn.stats);

      MaskedResult<Real> dr;
      if (mode == Mode::train && recorded != nullptr) {
        const Mask& m = recorded->cells.at(ci).stages.at(si).dropout_mask;
        if (m.size() != bn.output.size()) throw InternalError("replay: dropout mask size mismatch");
        dr.mask = m;
        dr.output = Tensor<Real>(bn.output.shape());
        const Real scale = static_cast<Real>(1.0 / (1.0 - st.dropout_rate));
        for (std::size_t i = 0; i < m.size(); ++i) {
          dr.output[i] = m[i] ? (st.dropout_rate == 0.0 ? bn.output[i] : bn.output[i] * scale)
                              : Real(0);
        }
      } else {
        Rng unused(0);
        dr = dropout(bn.output, st.dropout_rate, rng != nullptr ? *rng : unused, mode);
      }
      s.dropout_mask = std::move(dr.mask);

      auto act = relu(dr.output);
      s.relu_mask = std::move(act.mask);
      s.output = std::move(act.output);
      x = s.output;
      ct.stages.push_back(std::move(s));
    }
    if (cell.pooled) {
      auto pooled = maxpool_fwd(x, 2);
      ct.switches = std::move(pooled.switches);
      x = std::move(pooled.output);
    }
    ct.output = x;
    tr.cells.push_back(std::move(ct));
  }
  tr.feature_maps = conv2d_fwd(x, model.head);
  tr.logits = gap(tr.feature_maps);
  tr.probs = softmax(tr.logits);
  r.probs = tr.probs;
  return r;
}

}  // namespace

template <typename Real>
ForwardResult<Real> forward(Sequencer<Real>& model, const Tensor<Real>& batch, Mode mode, Rng& rng) {
  return run_forward<Real>(model, &model, batch, mode, &rng, nullptr);
}

template <typename Real>
ForwardResult<Real> forward(const Sequencer<Real>& model, const Tensor<Real>& batch) {
  return run_forward<Real>(model, nullptr, batch, Mode::infer, nullptr, nullptr);
}

template <typename Real>
Tensor<Real> replay(const Sequencer<Real>& model, const ForwardTrace<Real>& trace) {
  if (trace.cells.size() != model.cells.size()) {
    throw InternalError("replay: trace has " + std::to_string(trace.cells.size()) +
                        " cells, model has " + std::to_string(model.cells.size()));
  }
  return run_forward<Real>(model, nullptr, trace.input, trace.mode, nullptr, &trace).probs;
}

template <typename Real>
const std::vector<Real>& Gradients<Real>::at(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw ConfigError("no gradient named " + name);
}

template <typename Real>
Gradients<Real> backward(const Sequencer<Real>& model, const ForwardTrace<Real>& trace,
                         std::span<const int> labels) {
  if (trace.instance_id != model.instance_id || trace.version != model.version) {
    throw InternalError("backward: trace was recorded on model " +
                        std::to_string(trace.instance_id) + " v" + std::to_string(trace.version) +
                        ", not model " + std::to_string(model.instance_id) + " v" +
                        std::to_string(model.version));
  }
  if (trace.mode != Mode::train) throw InternalError("backward: requires a train-mode trace");
  if (trace.cells.size() != model.cells.size()) throw InternalError("backward: trace/model cell mismatch");

  auto xent = softmax_xent(trace.logits, labels);
  Gradients<Real> grads;
  grads.loss = xent.loss;
  std::unordered_map<std::string, std::vector<Real>> by_name;

  Tensor<Real> g = gap_bwd(xent.grad_logits, trace.feature_maps.shape());
  const Tensor<Real>& head_in = trace.cells.back().output;
  {
    auto hg = conv2d_bwd(head_in, model.head, g, true);
    by_name["head.weight"] = hg.weights.values();
    by_name["head.bias"] = std::move(hg.bias);
    g = std::move(hg.input);
  }
  for (std::size_t ci = model.cells.size(); ci-- > 0;) {
    const Cell<Real>& cell = model.cells[ci];
    const CellTrace<Real>& ct = trace.cells[ci];
    if (ct.stages.size() != cell.stages.size()) throw InternalError("backward: stage count mismatch");
    if (cell.pooled) {
      const Shape pre = ct.stages.empty() ? ct.switches->input_shape : ct.stages.back().output.shape();
      g = unpool(g, *ct.switches, pre);
    }
    for (std::size_t si = cell.stages.size(); si-- > 0;) {
      const ConvStage<Real>& st = cell.stages[si];
      const StageTrace<Real>& s = ct.stages[si];
      const std::string p = "cell" + std::to_string(ci) + ".stage" + std::to_string(si);
      g = relu_bwd(g, s.relu_mask);
      g = dropout_bwd(g, s.dropout_mask, st.dropout_rate);
      auto bg = batchnorm_bwd(s.conv_out, st.bn, s.stats, g);
      by_name[p + ".bn.gamma"] = std::move(bg.gamma);
      by_name[p + ".bn.beta"] = std::move(bg.beta);
      const bool first = ci == 0 && si == 0;
      auto cg = conv2d_bwd(s.input, st.conv, bg.input, !first);
      by_name[p + ".conv.weight"] = cg.weights.values();
      by_name[p + ".conv.bias"] = std::move(cg.bias);
      g = std::move(cg.input);
    }
  }

  for (const auto& t : model.tensors()) {
    if (!t.trainable) continue;
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw InternalError("backward: no gradient for " + t.name);
    grads.names.push_back(t.name);
    grads.values.push_back(std::move(it->second));
  }
  return grads;
}

Prediction argmax_prediction(std::span<const double> probs) {
  if (probs.empty()) throw DataError("argmax of an empty probability vector");
  Prediction p{0, probs[0]};
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > p.probability) p = Prediction{static_cast<int>(c), probs[c]};
  }
  return p;
}

template <typename Real>
Prediction predict(const Sequencer<Real>& model, const Tensor<Real>& image) {
  if (image.shape().n != 1) {
    throw DataError("predict expects a single image, got batch " + image.shape().str());
  }
  const auto r = forward(model, image);
  std::vector<double> probs(r.probs.data().begin(), r.probs.data().end());
  return argmax_prediction(probs);
}

template <typename To, typename From>
Sequencer<To> convert_sequencer(const Sequencer<From>& model) {
  Rng rng(0);
  Sequencer<To> out = build_sequencer<To>(model.config, rng);
  out.instance_id = model.instance_id;
  out.version = model.version;
  auto src = model.tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::transform(src[i].values.begin(), src[i].values.end(), dst[i].values.begin(),
                   [](From v) { return static_cast<To>(v); });
  }
  for (std::size_t ci = 0; ci < out.cells.size(); ++ci) {
    for (std::size_t si = 0; si < out.cells[ci].stages.size(); ++si) {
      out.cells[ci].stages[si].bn.momentum = model.cells[ci].stages[si].bn.momentum;
      out.cells[ci].stages[si].bn.epsilon = model.cells[ci].stages[si].bn.epsilon;
    }
  }
  return out;
}

#define SISC_INSTANTIATE_MODEL(Real)                                                          \
  template class Sequencer<Real>;                                                             \
  template struct ForwardTrace<Real>;                                                         \
  template struct Gradients<Real>;                                                            \
  template Sequencer<Real> build_sequencer(const SequencerConfig&, Rng&);                     \
  template ForwardResult<Real> forward(Sequencer<Real>&, const Tensor<Real>&, Mode, Rng&);     \
  template ForwardResult<Real> forward(const Sequencer<Real>&, const Tensor<Real>&);          \
  template Tensor<Real> replay(const Sequencer<Real>&, const ForwardTrace<Real>&);            \
  template Gradients<Real> backward(const Sequencer<Real>&, const ForwardTrace<Real>&,         \
                                    std::span<const int>);                                    \
  template Prediction predict(const Sequencer<Real>&, const Tensor<Real>&);

SISC_INSTANTIATE_MODEL(float)
SISC_INSTANTIATE_MODEL(double)

template Sequencer<double> convert_sequencer<double, float>(const Sequencer<float>&);
template Sequencer<float> convert_sequencer<float, double>(const Sequencer<double>&);
template Sequencer<float> convert_sequencer<float, float>(const Sequencer<float>&);
template Sequencer<double> convert_sequencer<double, double>(const Sequencer<double>&);

}  // namespace sisc
