#include <cmath>
#include <cstring>
#include <sstream>

#include "sisc/crm.hpp"

namespace sisc {

std::string to_string(RenderMode m) {
  return m == RenderMode::signed_map ? "signed" : "magnitude";
}

template <typename Real>
RenderedMap render_map(const Tensor<Real>& map, RenderMode mode) {
  ensure_finite(map, "render_map");
  RenderedMap r;
  r.mode = mode;
  r.image.width = map.shape().w;
  r.image.height = map.shape().h * map.shape().n * map.shape().c;
  r.image.maxval = 255;
  r.image.pixels.resize(map.size());
  double s = 0.0;
  for (Real v : map.data()) s = std::max(s, std::abs(static_cast<double>(v)));
  r.scale = s;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double a = map[i];
    double q;
    if (s == 0.0) {
      q = mode == RenderMode::signed_map ? 128.0 : 0.0;
    } else if (mode == RenderMode::signed_map) {
      q = std::floor((a + s) * 255.0 / (2.0 * s) + 0.5);
    } else {
      q = std::floor(std::abs(a) * 255.0 / s + 0.5);
    }
    r.image.pixels[i] = static_cast<std::uint16_t>(std::clamp(q, 0.0, 255.0));
  }
  return r;
}

std::vector<double> descale(const RenderedMap& rendered) {
  std::vector<double> out(rendered.image.pixels.size());
  const double s = rendered.scale;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double q = rendered.image.pixels[i];
    out[i] = rendered.mode == RenderMode::signed_map ? q * 2.0 * s / 255.0 - s : q * s / 255.0;
  }
  return out;
}

template <typename Real>
double localization_score(const Tensor<Real>& map, std::span<const std::uint8_t> mask) {
  if (mask.size() != map.size()) {
    throw DataError("localization_score: mask has " + std::to_string(mask.size()) +
                    " pixels, map has " + std::to_string(map.size()));
  }
  bool any = false;
  for (auto m : mask) any = any || m != 0;
  if (!any) throw DataError("localization_score: empty region mask");
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double a = std::abs(static_cast<double>(map[i]));
    total += a;
    if (mask[i]) inside += a;
  }
  return total > 0.0 ? inside / total : 0.0;
}

std::vector<std::uint8_t> encode_raw_map(const Tensor<float>& map) {
  const Shape& s = map.shape();
  if (s.n != 1 || s.c != 1) throw DataError("raw map export expects a (1, 1, H, W) map");
  std::vector<std::uint8_t> out = {'C', 'R', 'M', '1'};
  io::put_u32(out, static_cast<std::uint32_t>(s.h));
  io::put_u32(out, static_cast<std::uint32_t>(s.w));
  io::put_u32(out, 0);
  for (float v : map.data()) io::put_f32(out, v);
  return out;
}

Tensor<float> decode_raw_map(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "CRM1", 4) != 0) {
    throw DataError("not a raw CRM file");
  }
  const std::size_t h = io::get_u32(bytes.data() + 4);
  const std::size_t w = io::get_u32(bytes.data() + 8);
  if (bytes.size() != 16 + h * w * 4) throw DataError("raw CRM size does not match its header");
  Tensor<float> map(Shape{1, 1, h, w});
  for (std::size_t i = 0; i < h * w; ++i) map[i] = io::get_f32(bytes.data() + 16 + 4 * i);
  return map;
}

template <typename Real>
void export_map(const CriticalResponseMap<Real>& crm, const RenderedMap& rendered,
                const std::filesystem::path& stem) {
  io::write_pgm(std::filesystem::path(stem).concat(".pgm"), rendered.image);
  std::ostringstream os;
  os << "class_id = " << crm.class_id << '\n'
     << "variant = " << to_string(crm.variant) << '\n'
     << "mode = " << to_string(rendered.mode) << '\n'
     << "scale = " << io::format_double(rendered.scale) << '\n'
     << "image_digest = " << crm.image_digest << '\n'
     << "checkpoint = " << (crm.checkpoint_id.empty() ? "unknown" : crm.checkpoint_id) << '\n'
     << "height = " << rendered.image.height << '\n'
     << "width = " << rendered.image.width << '\n';
  io::write_text(std::filesystem::path(stem).concat(".txt"), os.str());
}

template RenderedMap render_map(const Tensor<float>&, RenderMode);
template RenderedMap render_map(const Tensor<double>&, RenderMode);
template double localization_score(const Tensor<float>&, std::span<const std::uint8_t>);
template double localization_score(const Tensor<double>&, std::span<const std::uint8_t>);
template void export_map(const CriticalResponseMap<float>&, const RenderedMap&,
                         const std::filesystem::path&);
template void export_map(const CriticalResponseMap<double>&, const RenderedMap&,
                         const std::filesystem::path&);

}  // namespace sisc
