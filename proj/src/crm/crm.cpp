#include "sisc/crm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sisc {

std::string to_string(CrmVariant v) {
  switch (v) {
    case CrmVariant::literal: return "literal";
    case CrmVariant::deconvnet: return "deconvnet";
    case CrmVariant::guided: return "guided";
  }
  return "?";
}

CrmVariant parse_crm_variant(const std::string& s) {
  if (s == "literal") return CrmVariant::literal;
  if (s == "deconvnet" || s == "deconvnet-relu") return CrmVariant::deconvnet;
  if (s == "guided") return CrmVariant::guided;
  throw ConfigError("unknown CRM variant '" + s + "' (expected literal, deconvnet or guided)");
}

template <typename Real>
Tensor<Real> select_class(const Tensor<Real>& feature_maps, int class_id) {
  const Shape& s = feature_maps.shape();
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= s.c) {
    throw DataError("class " + std::to_string(class_id) + " outside [0, " + std::to_string(s.c) + ")");
  }
  Tensor<Real> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    auto src = feature_maps.plane(n, static_cast<std::size_t>(class_id));
    std::copy(src.begin(), src.end(), out.plane(n, static_cast<std::size_t>(class_id)).begin());
  }
  return out;
}

namespace {

template <typename Real>
void check_trace(const Sequencer<Real>& model, const ForwardTrace<Real>& trace) {
  if (trace.instance_id != model.instance_id || trace.version != model.version) {
    throw InternalError("CRM: trace belongs to a different model version");
  }
  if (trace.mode != Mode::infer) throw InternalError("CRM: back-projection needs an infer-mode trace");
  if (trace.cells.size() != model.cells.size()) throw InternalError("CRM: trace/model cell mismatch");
}

template <typename Real>
void apply_relu_rule(Tensor<Real>& g, const Mask& forward_mask, CrmVariant variant) {
  if (variant == CrmVariant::literal) return;
  for (std::size_t i = 0; i < g.size(); ++i) {
    Real v = g[i] > Real(0) ? g[i] : Real(0);
    if (variant == CrmVariant::guided && !forward_mask[i]) v = Real(0);
    g[i] = v;
  }
}

}  // namespace

template <typename Real>
Tensor<Real> backproject(const Sequencer<Real>& model, const ForwardTrace<Real>& trace,
                         const Tensor<Real>& head_output_signal, CrmVariant variant) {
  check_trace(model, trace);
  if (head_output_signal.shape() != trace.feature_maps.shape()) {
    throw InternalError("CRM: signal " + head_output_signal.shape().str() +
                        " does not match the last-layer maps " + trace.feature_maps.shape().str());
  }
  const Shape& head_in = trace.cells.back().output.shape();
  Tensor<Real> g = deconv_project(head_output_signal, model.head, std::pair{head_in.h, head_in.w});
  for (std::size_t ci = model.cells.size(); ci-- > 0;) {
    const Cell<Real>& cell = model.cells[ci];
    const CellTrace<Real>& ct = trace.cells[ci];
    if (cell.pooled) g = unpool(g, *ct.switches, ct.switches->input_shape);
    for (std::size_t si = cell.stages.size(); si-- > 0;) {
      const ConvStage<Real>& st = cell.stages[si];
      const StageTrace<Real>& s = ct.stages[si];
      apply_relu_rule(g, s.relu_mask, variant);
      // dropout is the identity at inference
      const auto scale = batchnorm_infer_scale(st.bn);
      const Shape& gs = g.shape();
      for (std::size_t n = 0; n < gs.n; ++n) {
        for (std::size_t c = 0; c < gs.c; ++c) {
          for (Real& v : g.plane(n, c)) v *= scale[c];
        }
      }
      g = deconv_project(g, st.conv, std::pair{s.input.shape().h, s.input.shape().w});
    }
  }
  return g;
}

template <typename Real>
std::string image_digest(const Tensor<Real>& image) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.size() * 4);
  for (Real v : image.data()) io::put_f32(bytes, static_cast<float>(v));
  return io::hex32(io::crc32(bytes));
}

template <typename Real>
CriticalResponseMap<Real> crm_from_trace(const Sequencer<Real>& model, const ForwardTrace<Real>& trace,
                                         int class_id, CrmVariant variant) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= model.config.class_count) {
    throw DataError("class " + std::to_string(class_id) + " outside [0, " +
                    std::to_string(model.config.class_count) + ")");
  }
  if (trace.input.shape().n != 1) throw DataError("CRM expects a single image");
  CriticalResponseMap<Real> crm;
  crm.class_id = class_id;
  crm.variant = variant;
  crm.map = backproject(model, trace, select_class(trace.feature_maps, class_id), variant);
  crm.image_digest = image_digest(trace.input);
  ensure_finite(crm.map, "critical response map");
  return crm;
}

template <typename Real>
CriticalResponseMap<Real> generate_crm(const Sequencer<Real>& model, const Tensor<Real>& image,
                                       int class_id, CrmVariant variant) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= model.config.class_count) {
    throw DataError("class " + std::to_string(class_id) + " outside [0, " +
                    std::to_string(model.config.class_count) + ")");
  }
  const auto fwd = forward(model, image);
  return crm_from_trace(model, fwd.trace, class_id, variant);
}

template <typename Real>
std::vector<CriticalResponseMap<Real>> crm_all_classes(const Sequencer<Real>& model,
                                                       const Tensor<Real>& image, CrmVariant variant) {
  const auto fwd = forward(model, image);
  std::vector<CriticalResponseMap<Real>> maps;
  for (std::size_t c = 0; c < model.config.class_count; ++c) {
    maps.push_back(crm_from_trace(model, fwd.trace, static_cast<int>(c), variant));
  }
  return maps;
}

#define SISC_INSTANTIATE_CRM(Real)                                                               \
  template Tensor<Real> select_class(const Tensor<Real>&, int);                                  \
  template Tensor<Real> backproject(const Sequencer<Real>&, const ForwardTrace<Real>&,           \
                                    const Tensor<Real>&, CrmVariant);                            \
  template std::string image_digest(const Tensor<Real>&);                                        \
  template CriticalResponseMap<Real> crm_from_trace(const Sequencer<Real>&,                      \
                                                    const ForwardTrace<Real>&, int, CrmVariant); \
  template CriticalResponseMap<Real> generate_crm(const Sequencer<Real>&, const Tensor<Real>&,   \
                                                  int, CrmVariant);                              \
  template std::vector<CriticalResponseMap<Real>> crm_all_classes(                               \
      const Sequencer<Real>&, const Tensor<Real>&, CrmVariant);

SISC_INSTANTIATE_CRM(float)
SISC_INSTANTIATE_CRM(double)

}  // namespace sisc
