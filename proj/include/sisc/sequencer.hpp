#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sisc/tensor.hpp"

namespace sisc {

// One interpretable sequencing cell: `conv_count` repetitions of
// conv -> batchnorm -> dropout -> ReLU, all sharing kernel size, channel
// count, dropout rate and batchnorm momentum.
struct CellConfig {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  double dropout_rate = 0.25;
  double bn_momentum = 0.99;
  std::size_t conv_count = 3;

  bool operator==(const CellConfig&) const = default;
};

// The stack: every entry of `cells` ends in a 2x2 max pool; `final_cell` runs
// its conv stages without pooling and is followed by a 1x1 convolution with
// `class_count` kernels, global average pooling and softmax.
struct SequencerConfig {
  std::vector<CellConfig> cells;
  CellConfig final_cell{128, 3, 0.25, 0.99, 1};
  std::size_t input_size = 96;
  std::size_t input_channels = 1;
  std::size_t class_count = 2;
  double bn_epsilon = 1e-3;

  // Four cells: channels 16, 32, 64 with kernel 3, then a 128-channel final
  // cell. Input 96x96, two classes.
  static SequencerConfig standard();

  std::size_t cell_count() const { return cells.size() + 1; }
  std::size_t pooled_size() const;  // spatial extent reaching the final cell

  // Every violated invariant, one message each. Empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;  // ConfigError listing all violations

  // Canonical `key = value` text; the checkpoint header and config echoes
  // use it. Doubles round-trip exactly.
  std::string to_text() const;
  static SequencerConfig from_text(const std::string& text);

  bool operator==(const SequencerConfig&) const = default;
};

// Trainable scalars:
//   per conv stage  c_out*c_in*k*k + c_out (conv) + 2*c_out (gamma, beta)
//   head            class_count*c_last + class_count
std::size_t parameter_count(const SequencerConfig& config);
// Non-trainable batchnorm running statistics: 2*c_out per stage.
std::size_t buffer_count(const SequencerConfig& config);

template <typename Real>
struct ConvStage {
  ConvParams<Real> conv;
  BatchNormParams<Real> bn;
  double dropout_rate = 0.0;
};

template <typename Real>
struct Cell {
  std::vector<ConvStage<Real>> stages;
  bool pooled = true;
};

template <typename Real>
struct NamedSpan {
  std::string name;
  std::span<Real> values;
  bool trainable = true;
};

template <typename Real>
class Sequencer {
 public:
  SequencerConfig config;
  std::vector<Cell<Real>> cells;  // cells.back() is the final cell
  ConvParams<Real> head;          // 1x1, class_count kernels
  std::uint64_t instance_id = 0;  // identity shared by copies
  std::uint64_t version = 0;      // bumped by every parameter update

  // Weights, biases, gammas, betas and running statistics in declaration
  // order: per stage conv.weight, conv.bias, bn.gamma, bn.beta,
  // bn.running_mean, bn.running_var; then head.weight, head.bias.
  std::vector<NamedSpan<Real>> tensors();
  std::vector<NamedSpan<const Real>> tensors() const;
  std::vector<NamedSpan<Real>> parameters();  // trainable subset

  std::size_t layer_count() const;  // conv stages plus head
};

// He fan-in initialization (normal, stddev sqrt(2/fan_in)); zero biases,
// unit gamma, zero beta.
template <typename Real>
Sequencer<Real> build_sequencer(const SequencerConfig& config, Rng& rng);

template <typename Real>
struct StageTrace {
  Tensor<Real> input;     // conv input
  Tensor<Real> conv_out;  // pre-normalization
  BatchStats<Real> stats; // train mode only
  Mask dropout_mask;
  Mask relu_mask;
  Tensor<Real> output;    // post-ReLU
};

template <typename Real>
struct CellTrace {
  std::vector<StageTrace<Real>> stages;
  std::optional<PoolSwitches> switches;
  Tensor<Real> output;  // pooled output, or the last stage output
};

// Everything one forward pass produced, enough to run backward and to
// back-project critical response maps.
template <typename Real>
struct ForwardTrace {
  Mode mode = Mode::infer;
  std::uint64_t instance_id = 0;
  std::uint64_t version = 0;
  Tensor<Real> input;
  std::vector<CellTrace<Real>> cells;
  Tensor<Real> feature_maps;  // head output before global average pooling
  Tensor<Real> logits;        // (N, classes, 1, 1)
  Tensor<Real> probs;

  std::size_t layer_count() const;
};

template <typename Real>
struct ForwardResult {
  Tensor<Real> probs;
  ForwardTrace<Real> trace;
};

// Train mode draws dropout masks from `rng` and folds batch statistics into
// the running statistics; infer mode bypasses dropout and reads running
// statistics. `batch` must be (N, input_channels, input_size, input_size).
template <typename Real>
ForwardResult<Real> forward(Sequencer<Real>& model, const Tensor<Real>& batch, Mode mode,
                            Rng& rng);
template <typename Real>
ForwardResult<Real> forward(const Sequencer<Real>& model, const Tensor<Real>& batch);

// Re-executes the pass recorded in `trace` with its dropout masks, without
// touching running statistics. In infer mode it reproduces trace.probs
// bit-exactly; in train mode it is the deterministic loss surface that
// backward() differentiates.
template <typename Real>
Tensor<Real> replay(const Sequencer<Real>& model, const ForwardTrace<Real>& trace);

template <typename Real>
struct Gradients {
  std::vector<std::string> names;
  std::vector<std::vector<Real>> values;
  double loss = 0.0;

  const std::vector<Real>& at(const std::string& name) const;
};

// Gradients of the mean cross-entropy with respect to every trainable
// parameter, in parameters() order. Requires a train-mode trace taken on the
// same model version.
template <typename Real>
Gradients<Real> backward(const Sequencer<Real>& model, const ForwardTrace<Real>& trace,
                         std::span<const int> labels);

template <typename Real>
struct AdamState {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
};

// Bias-corrected Adam. Rejects non-finite gradients before touching any
// parameter.
template <typename Real>
void adam_step(std::span<const NamedSpan<Real>> params, const Gradients<Real>& grads,
               AdamState<Real>& state);
template <typename Real>
void adam_step(Sequencer<Real>& model, const Gradients<Real>& grads, AdamState<Real>& state);

template <typename Real>
struct LabeledImages {
  Tensor<Real> images;  // (N, C, H, W)
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Tensor<Real> gather(std::span<const std::size_t> indices) const;
};

struct TrainSchedule {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 1e-5;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_auc = 0.0;  // NaN when the validation set has one class
};

template <typename Real>
struct TrainResult {
  Sequencer<Real> best;  // highest validation accuracy, earliest on ties
  Sequencer<Real> last;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

template <typename Real>
TrainResult<Real> train(Sequencer<Real> model, const LabeledImages<Real>& train_set,
                        const LabeledImages<Real>& val_set, const TrainSchedule& schedule,
                        const std::function<void(const EpochRecord&)>& on_epoch = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predicted;
  std::vector<double> positive_scores;  // probability of class 1
};

// Infer-mode pass over a labeled set in chunks of `batch_size`.
template <typename Real>
Evaluation evaluate(const Sequencer<Real>& model, const LabeledImages<Real>& set,
                    std::size_t batch_size = 128);

struct Prediction {
  int class_id = 0;
  double probability = 0.0;
};

// Argmax over per-class probabilities; exact ties go to the lowest class id.
Prediction argmax_prediction(std::span<const double> probs);

template <typename Real>
Prediction predict(const Sequencer<Real>& model, const Tensor<Real>& image);

// Checkpoint file: "SISC", u32 format version, u32 config length, canonical
// config text, little-endian float32 tensors in declaration order, CRC-32 of
// everything before it.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Sequencer<float>& model);
Sequencer<float> decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Sequencer<float>& model, const std::filesystem::path& path);
Sequencer<float> load_checkpoint(const std::filesystem::path& path);
// CRC-32 trailer of an encoded checkpoint, as a stable identity.
std::uint32_t checkpoint_identity(std::span<const std::uint8_t> bytes);

// Precision conversion keeping configuration and identity.
template <typename To, typename From>
Sequencer<To> convert_sequencer(const Sequencer<From>& model);

}  // namespace sisc
