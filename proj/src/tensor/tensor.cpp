#include "sisc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sisc {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill)
    : shape_(shape), data_(shape.count(), fill) {}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.count()) {
    throw ConfigError("tensor of shape " + shape_.str() + " needs " +
                      std::to_string(shape_.count()) + " values, got " +
                      std::to_string(data_.size()));
  }
}

template <typename Real>
Tensor<Real> Tensor<Real>::random_normal(Shape shape, Rng& rng, double stddev) {
  Tensor t(shape);
  for (auto& x : t.data_) x = static_cast<Real>(rng.normal() * stddev);
  return t;
}

template <typename Real>
Tensor<Real> Tensor<Real>::random_uniform(Shape shape, Rng& rng, double lo,
                                          double hi) {
  Tensor t(shape);
  for (auto& x : t.data_) x = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

template <typename Real>
void ensure_finite(std::span<const Real> values, std::string_view where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("non-finite value " + std::to_string(values[i]) +
                         " at element " + std::to_string(i) + " in " +
                         std::string(where));
    }
  }
}

// Eight independent partial sums, combined pairwise. The fixed lane layout
// keeps the result reproducible while letting the compiler vectorize.
template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  const std::size_t n = a.size();
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += pa[i + j] * pb[i + j];
  }
  for (; i < n; ++i) acc[i & 7] += pa[i] * pb[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template class Tensor<float>;
template class Tensor<double>;
template void ensure_finite<float>(std::span<const float>, std::string_view);
template void ensure_finite<double>(std::span<const double>, std::string_view);
template float dot<float>(std::span<const float>, std::span<const float>);
template double dot<double>(std::span<const double>, std::span<const double>);

}  // namespace sisc
