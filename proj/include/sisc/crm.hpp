#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sisc/io.hpp"
#include "sisc/sequencer.hpp"

namespace sisc {

// Backward rule applied at each ReLU site while back-projecting.
//   literal   - none; the chain is deconvolution and un-pooling only
//   deconvnet - rectify the back-projected signal
//   guided    - rectify and also apply the forward ReLU mask
enum class CrmVariant { literal, deconvnet, guided };

std::string to_string(CrmVariant v);
CrmVariant parse_crm_variant(const std::string& s);

template <typename Real>
struct CriticalResponseMap {
  int class_id = 0;
  Tensor<Real> map;  // (1, 1, H, W) in input coordinates
  CrmVariant variant = CrmVariant::literal;
  std::string checkpoint_id;  // filled by callers that know it
  std::string image_digest;   // CRC-32 of the float32 image bytes
};

// Keeps channel `class_id` of the last-layer feature maps and zeroes the
// rest; projecting the result through the head is the head's adjoint with
// every kernel but the class's one zeroed.
template <typename Real>
Tensor<Real> select_class(const Tensor<Real>& feature_maps, int class_id);

// Runs the back-projection chain from head-output space down to the input:
// head adjoint, then per cell (in reverse) un-pooling with the recorded
// switches and per stage (in reverse) the variant's ReLU rule, the
// inference batchnorm scale gamma/sqrt(var+eps), and the transposed
// convolution. Biases and batchnorm shifts take no part. Needs an
// infer-mode trace of the same model version.
template <typename Real>
Tensor<Real> backproject(const Sequencer<Real>& model, const ForwardTrace<Real>& trace,
                         const Tensor<Real>& head_output_signal, CrmVariant variant);

template <typename Real>
CriticalResponseMap<Real> generate_crm(const Sequencer<Real>& model, const Tensor<Real>& image,
                                       int class_id, CrmVariant variant = CrmVariant::literal);

// Same as generate_crm but reusing an existing infer-mode trace.
template <typename Real>
CriticalResponseMap<Real> crm_from_trace(const Sequencer<Real>& model,
                                         const ForwardTrace<Real>& trace, int class_id,
                                         CrmVariant variant);

// One map per class, all from one forward pass.
template <typename Real>
std::vector<CriticalResponseMap<Real>> crm_all_classes(const Sequencer<Real>& model,
                                                       const Tensor<Real>& image,
                                                       CrmVariant variant = CrmVariant::literal);

template <typename Real>
std::string image_digest(const Tensor<Real>& image);

enum class RenderMode { signed_map, magnitude };

std::string to_string(RenderMode m);

struct RenderedMap {
  io::GrayImage image;  // maxval 255
  RenderMode mode = RenderMode::signed_map;
  double scale = 0.0;   // max |a|; 0 for an all-zero map
};

// signed:    [-s, +s] -> [0, 255], zero lands on 128
// magnitude: [0, s]   -> [0, 255]
template <typename Real>
RenderedMap render_map(const Tensor<Real>& map, RenderMode mode);

// Inverse of render_map up to quantization (at most scale/255 per pixel).
std::vector<double> descale(const RenderedMap& rendered);

// Fraction of total |map| mass inside the binary mask. An all-zero map
// scores 0.
template <typename Real>
double localization_score(const Tensor<Real>& map, std::span<const std::uint8_t> mask);

// Raw map: "CRM1", u32 height, u32 width, u32 reserved (0), then row-major
// little-endian float32 values.
std::vector<std::uint8_t> encode_raw_map(const Tensor<float>& map);
Tensor<float> decode_raw_map(std::span<const std::uint8_t> bytes);

// Writes <stem>.pgm and <stem>.txt (class, variant, mode, scale, digests).
template <typename Real>
void export_map(const CriticalResponseMap<Real>& crm, const RenderedMap& rendered,
                const std::filesystem::path& stem);

}  // namespace sisc
