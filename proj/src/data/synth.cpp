#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "sisc/data.hpp"

namespace sisc {

namespace {

constexpr double kBackgroundMean = 0.2;
constexpr double kBackgroundStd = 0.08;
constexpr std::size_t kBlurRadius = 2;

// Box-blurred white noise rescaled to the background level.
std::vector<double> correlated_noise(std::size_t size, Rng& rng) {
  std::vector<double> white(size * size);
  for (double& v : white) v = rng.normal();
  std::vector<double> blurred(size * size, 0.0);
  const long r = static_cast<long>(kBlurRadius);
  const long n = static_cast<long>(size);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      double acc = 0.0;
      int taps = 0;
      for (long u = std::max(0L, i - r); u <= std::min(n - 1, i + r); ++u) {
        for (long v = std::max(0L, j - r); v <= std::min(n - 1, j + r); ++v) {
          acc += white[static_cast<std::size_t>(u * n + v)];
          ++taps;
        }
      }
      blurred[static_cast<std::size_t>(i * n + j)] = acc / taps;
    }
  }
  double mean = 0.0;
  for (double v : blurred) mean += v;
  mean /= static_cast<double>(blurred.size());
  double var = 0.0;
  for (double v : blurred) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(blurred.size()));
  for (double& v : blurred) v = kBackgroundMean + kBackgroundStd * (v - mean) / (sd > 0 ? sd : 1.0);
  return blurred;
}

struct Blob {
  double cx = 0.0, cy = 0.0;
  double radius = 0.0;
  double contrast = 0.0;
  std::array<double, 3> amplitude{};  // harmonics 2, 3, 4
  std::array<double, 3> phase{};

  double boundary(double theta) const {
    double r = 1.0;
    for (std::size_t k = 0; k < 3; ++k) {
      r += amplitude[k] * std::cos(static_cast<double>(k + 2) * theta + phase[k]);
    }
    return radius * r;
  }
};

NoduleSample make_sample(std::size_t index, std::uint64_t seed, std::size_t size) {
  Rng rng(mix_seed(seed, index));
  const bool malignant = index % 2 == 1;
  const double scale = static_cast<double>(size) / 96.0;

  std::vector<double> pixels = correlated_noise(size, rng);

  Blob blob;
  const double mid = static_cast<double>(size) / 2.0;
  blob.cx = mid + rng.uniform(-6.0, 6.0) * scale;
  blob.cy = mid + rng.uniform(-6.0, 6.0) * scale;
  if (malignant) {
    blob.radius = rng.uniform(8.0, 20.0) * scale;
    blob.contrast = 0.7;
    for (std::size_t k = 0; k < 3; ++k) {
      blob.amplitude[k] = rng.uniform(0.05, 0.18);
      blob.phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  } else {
    blob.radius = rng.uniform(4.0, 8.0) * scale;
    blob.contrast = 0.35;
  }

  std::vector<std::uint8_t> mask(size * size, 0);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double dx = static_cast<double>(j) - blob.cx;
      const double dy = static_cast<double>(i) - blob.cy;
      const double d = std::hypot(dx, dy);
      const double edge = blob.boundary(std::atan2(dy, dx));
      // one-pixel linear ramp across the boundary
      const double cover = std::clamp(edge - d + 0.5, 0.0, 1.0);
      pixels[i * size + j] += blob.contrast * cover;
      if (d <= edge) mask[i * size + j] = 1;
    }
  }

  NoduleSample s;
  Tensor<float> raw(Shape{1, 1, size, size});
  for (std::size_t i = 0; i < pixels.size(); ++i) raw[i] = static_cast<float>(pixels[i]);
  s.image = minmax_normalize(raw);
  s.score = malignant ? 4 + static_cast<int>(rng.below(2)) : 1 + static_cast<int>(rng.below(2));
  s.label = malignant ? Label::malignant : Label::benign;
  s.mask = std::move(mask);
  s.provenance.id = "synth-" + std::to_string(seed) + "-" + std::to_string(index);
  s.provenance.root = s.provenance.id;
  s.provenance.lineage = s.provenance.id;
  return s;
}

}  // namespace

std::vector<NoduleSample> synth_generate(std::size_t n, std::uint64_t seed, std::size_t size) {
  if (n < 2) throw ConfigError("synthetic generation needs n >= 2 to cover both classes");
  if (size < 16) throw ConfigError("synthetic images need size >= 16");
  std::vector<NoduleSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_sample(i, seed, size));
  return out;
}

}  // namespace sisc
