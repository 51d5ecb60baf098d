#include <algorithm>
#include <cmath>
#include <numbers>

#include "sisc/data.hpp"
#include "sisc/io.hpp"

namespace sisc {

namespace {

void check_single(const Tensor<float>& image, const char* what) {
  if (image.shape().n != 1 || image.shape().c != 1) {
    throw DataError(std::string(what) + " expects a (1, 1, H, W) image, got " + image.shape().str());
  }
}

}  // namespace

Tensor<float> crop_nodule(const Tensor<float>& slice, PixelCenter center, std::size_t size) {
  check_single(slice, "crop_nodule");
  const auto h = static_cast<long>(slice.shape().h);
  const auto w = static_cast<long>(slice.shape().w);
  if (center.x < 0 || center.x >= w || center.y < 0 || center.y >= h) {
    throw DataError("nodule center (" + std::to_string(center.x) + ", " + std::to_string(center.y) +
                    ") lies outside the " + std::to_string(w) + "x" + std::to_string(h) + " slice");
  }
  const long half = static_cast<long>(size / 2);
  Tensor<float> out(Shape{1, 1, size, size});
  for (std::size_t i = 0; i < size; ++i) {
    const long y = center.y - half + static_cast<long>(i);
    if (y < 0 || y >= h) continue;
    for (std::size_t j = 0; j < size; ++j) {
      const long x = center.x - half + static_cast<long>(j);
      if (x < 0 || x >= w) continue;
      out(0, 0, i, j) = slice(0, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
  }
  return out;
}

template <typename Real>
Tensor<Real> minmax_normalize(const Tensor<Real>& image) {
  Tensor<Real> out(image.shape());
  if (image.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(image.data().begin(), image.data().end());
  const Real lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  const Real range = hi - lo;
  for (std::size_t i = 0; i < image.size(); ++i) {
    // the extremes map to exactly 0 and 1
    out[i] = image[i] == hi ? Real(1) : (image[i] - lo) / range;
  }
  return out;
}

Tensor<float> flip_horizontal(const Tensor<float>& image) {
  check_single(image, "flip_horizontal");
  const Shape& s = image.shape();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) out(0, 0, i, j) = image(0, 0, i, s.w - 1 - j);
  }
  return out;
}

Tensor<float> flip_vertical(const Tensor<float>& image) {
  check_single(image, "flip_vertical");
  const Shape& s = image.shape();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) out(0, 0, i, j) = image(0, 0, s.h - 1 - i, j);
  }
  return out;
}

Tensor<float> shift_image(const Tensor<float>& image, long dx, long dy) {
  check_single(image, "shift_image");
  const Shape& s = image.shape();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < s.h; ++i) {
    const long y = static_cast<long>(i) - dy;
    if (y < 0 || y >= static_cast<long>(s.h)) continue;
    for (std::size_t j = 0; j < s.w; ++j) {
      const long x = static_cast<long>(j) - dx;
      if (x < 0 || x >= static_cast<long>(s.w)) continue;
      out(0, 0, i, j) = image(0, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
  }
  return out;
}

Tensor<float> rotate_image(const Tensor<float>& image, double degrees) {
  check_single(image, "rotate_image");
  const Shape& s = image.shape();
  Tensor<float> out(s);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), sn = std::sin(rad);
  const double cx = (static_cast<double>(s.w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(s.h) - 1.0) / 2.0;
  auto at = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(s.h) || x >= static_cast<long>(s.w)) return 0.0;
    return image(0, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) {
      const double dx = static_cast<double>(j) - cx;
      const double dy = static_cast<double>(i) - cy;
      const double sx = c * dx + sn * dy + cx;
      const double sy = -sn * dx + c * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double v = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                       ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
      out(0, 0, i, j) = static_cast<float>(v);
    }
  }
  return out;
}

Tensor<float> load_slice(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("slice image " + path.string() + " not found");
  const io::GrayImage img = io::read_pgm(path);
  Tensor<float> t(Shape{1, 1, img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<float>(img.pixels[i]);
  return t;
}

template Tensor<float> minmax_normalize(const Tensor<float>&);
template Tensor<double> minmax_normalize(const Tensor<double>&);

}  // namespace sisc
