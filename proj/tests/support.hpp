#pragma once

// Independent reference implementations and helpers shared by the tests.
// Nothing here calls into the kernels under test.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sisc/tensor.hpp"

namespace sisc::testing {

// Direct nested-loop cross-correlation with zero padding.
inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                                 const std::vector<double>& bias, std::size_t stride,
                                 std::size_t pad) {
  const Shape& s = x.shape();
  const Shape& k = w.shape();
  const std::size_t ho = (s.h + 2 * pad - k.h) / stride + 1;
  const std::size_t wo = (s.w + 2 * pad - k.w) / stride + 1;
  Tensor<double> out(Shape{s.n, k.n, ho, wo});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < k.n; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t u = 0; u < k.h; ++u)
              for (std::size_t v = 0; v < k.w; ++v) {
                const long y = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long>(s.h) || xx >= static_cast<long>(s.w)) continue;
                acc += x(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) * w(o, c, u, v);
              }
          out(n, o, i, j) = acc;
        }
  return out;
}

inline double inner(std::span<const double> a, std::span<const double> b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(acc);
}

// |a - n| / max(|a|, |n|, floor); the floor keeps gradients that are zero up
// to rounding from dominating the statistic.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central difference of `f` in coordinate `x`.
inline double central_difference(double& x, const std::function<double()>& f, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double plus = f();
  x = saved - h;
  const double minus = f();
  x = saved;
  return (plus - minus) / (2 * h);
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sisc-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sisc::testing
