#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sisc/error.hpp"
#include "sisc/rng.hpp"

namespace sisc {

// Extents of a rank-4 (N, C, H, W) tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  std::size_t per_sample() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

enum class Mode { train, infer };

// Dense row-major (N, C, H, W) array. `Real` selects the precision: double
// for oracle and gradient work, float for training runs.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  const std::vector<Real>& values() const { return data_; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Real& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  Real operator()(std::size_t n, std::size_t c, std::size_t h,
                  std::size_t w) const {
    return data_[index(n, c, h, w)];
  }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  // Contiguous H*W plane of one (sample, channel).
  std::span<Real> plane(std::size_t n, std::size_t c) {
    return std::span<Real>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }
  std::span<const Real> plane(std::size_t n, std::size_t c) const {
    return std::span<const Real>(data_).subspan(index(n, c, 0, 0),
                                                shape_.plane());
  }
  std::span<const Real> sample(std::size_t n) const {
    return std::span<const Real>(data_).subspan(n * shape_.per_sample(),
                                                shape_.per_sample());
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  static Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0);
  static Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi);

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// Throws NumericError naming `where` on the first NaN/Inf.
template <typename Real>
void ensure_finite(std::span<const Real> values, std::string_view where);
template <typename Real>
void ensure_finite(const Tensor<Real>& t, std::string_view where) {
  ensure_finite<Real>(t.data(), where);
}

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b);

// ---------------------------------------------------------------------------
// Convolution

template <typename Real>
struct ConvParams {
  Tensor<Real> weights;  // (C_out, C_in, kH, kW)
  std::vector<Real> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weights.shape().n; }
  std::size_t in_channels() const { return weights.shape().c; }
  std::size_t kernel_h() const { return weights.shape().h; }
  std::size_t kernel_w() const { return weights.shape().w; }

  // Output extents for an input of `in`; throws ConfigError if they would be
  // empty or if the parameters are malformed.
  Shape output_shape(const Shape& in) const;
  void validate() const;
};

template <typename Real>
struct ConvGrads {
  Tensor<Real> input;
  Tensor<Real> weights;
  std::vector<Real> bias;
};

// Cross-correlation, no kernel flip:
//   out[n,o,i,j] = bias[o] + sum_{c,u,v} in[n,c,i*s-p+u,j*s-p+v] * w[o,c,u,v]
template <typename Real>
Tensor<Real> conv2d_fwd(const Tensor<Real>& input, const ConvParams<Real>& params);

// Analytic gradients of sum(grad_out * conv2d_fwd(input)). When
// `want_input_grad` is false the input gradient is left empty.
template <typename Real>
ConvGrads<Real> conv2d_bwd(const Tensor<Real>& input,
                           const ConvParams<Real>& params,
                           const Tensor<Real>& grad_out,
                           bool want_input_grad = true);

// Transposed convolution of `featmaps` back into the layer's input space using
// the layer's weights (bias excluded). Shares its kernel with the input
// gradient of conv2d_bwd, so the two agree bit-for-bit. `input_hw` resolves
// the extent ambiguity of strided layers; by default the minimal extent
// (H_out-1)*s - 2p + kH is used.
template <typename Real>
Tensor<Real> deconv_project(
    const Tensor<Real>& featmaps, const ConvParams<Real>& params,
    std::optional<std::pair<std::size_t, std::size_t>> input_hw = std::nullopt);

// ---------------------------------------------------------------------------
// Max pooling

struct PoolSwitches {
  std::size_t window = 2;
  std::size_t stride = 2;
  Shape input_shape;
  Shape output_shape;
  // Flat input index of each pooled element's source maximum, laid out in
  // output order.
  std::vector<std::size_t> argmax;
};

template <typename Real>
struct PoolResult {
  Tensor<Real> output;
  PoolSwitches switches;
};

// Non-overlapping max pooling; ties resolve to the first element in
// row-major order within the window.
template <typename Real>
PoolResult<Real> maxpool_fwd(const Tensor<Real>& input, std::size_t window);

// Scatters `pooled` to the recorded argmax positions of a zero tensor of
// `out_shape`. Doubles as the max-pool backward pass.
template <typename Real>
Tensor<Real> unpool(const Tensor<Real>& pooled, const PoolSwitches& switches,
                    const Shape& out_shape);

// ---------------------------------------------------------------------------
// Batch normalization

template <typename Real>
struct BatchNormParams {
  std::vector<Real> gamma;
  std::vector<Real> beta;
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  double momentum = 0.99;
  double epsilon = 1e-3;

  static BatchNormParams identity(std::size_t channels, double momentum,
                                  double epsilon);
  std::size_t channels() const { return gamma.size(); }
  void validate() const;
};

// Per-channel batch statistics (biased variance) used by a train-mode pass.
template <typename Real>
struct BatchStats {
  std::vector<Real> mean;
  std::vector<Real> var;
};

template <typename Real>
struct BatchNormResult {
  Tensor<Real> output;
  BatchStats<Real> stats;  // empty in infer mode
};

// Train mode normalizes with batch statistics over (N, H, W) and folds them
// into the running statistics with running = m*running + (1-m)*batch. Infer
// mode reads the running statistics only and leaves `params` untouched.
template <typename Real>
BatchNormResult<Real> batchnorm_fwd(const Tensor<Real>& input,
                                    BatchNormParams<Real>& params, Mode mode);

template <typename Real>
BatchStats<Real> batch_stats(const Tensor<Real>& input);

template <typename Real>
struct BatchNormGrads {
  Tensor<Real> input;
  std::vector<Real> gamma;
  std::vector<Real> beta;
};

// Gradients of the train-mode normalization. The overload without `stats`
// recomputes them from `input`.
template <typename Real>
BatchNormGrads<Real> batchnorm_bwd(const Tensor<Real>& input,
                                   const BatchNormParams<Real>& params,
                                   const BatchStats<Real>& stats,
                                   const Tensor<Real>& grad_out);
template <typename Real>
BatchNormGrads<Real> batchnorm_bwd(const Tensor<Real>& input,
                                   const BatchNormParams<Real>& params,
                                   const Tensor<Real>& grad_out);

// Per-channel factor gamma / sqrt(running_var + eps): the linear part of
// inference-mode batch normalization.
template <typename Real>
std::vector<Real> batchnorm_infer_scale(const BatchNormParams<Real>& params);

// ---------------------------------------------------------------------------
// Pointwise layers

using Mask = std::vector<std::uint8_t>;

template <typename Real>
struct MaskedResult {
  Tensor<Real> output;
  Mask mask;
};

template <typename Real>
MaskedResult<Real> relu(const Tensor<Real>& input);

// grad * mask
template <typename Real>
Tensor<Real> relu_bwd(const Tensor<Real>& grad_out, const Mask& mask);

// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so infer
// mode is the identity.
template <typename Real>
MaskedResult<Real> dropout(const Tensor<Real>& input, double rate, Rng& rng,
                           Mode mode);

template <typename Real>
Tensor<Real> dropout_bwd(const Tensor<Real>& grad_out, const Mask& mask,
                         double rate);

template <typename Real>
Tensor<Real> gap(const Tensor<Real>& input);

template <typename Real>
Tensor<Real> gap_bwd(const Tensor<Real>& grad_out, const Shape& input_shape);

template <typename Real>
struct SoftmaxXent {
  Tensor<Real> probs;
  double loss = 0.0;
  Tensor<Real> grad_logits;
};

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits);

// Mean negative log-likelihood over the batch; grad = (probs - onehot) / N.
template <typename Real>
SoftmaxXent<Real> softmax_xent(const Tensor<Real>& logits,
                               std::span<const int> labels);

}  // namespace sisc
