#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sisc/sequencer.hpp"
#include "sisc/tensor.hpp"

namespace sisc {

enum class Label : std::uint8_t { benign = 0, malignant = 1, excluded = 2 };

// Treatment of the ambiguous malignancy score 3: ignored, benign, malignant.
enum class Variant { I, B, M };

std::string to_string(Label l);
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);  // ConfigError listing {I, B, M}

// 1, 2 -> benign; 4, 5 -> malignant; 3 -> per variant.
Label assign_label(int score, Variant variant);

// Half-away-from-zero rounding: 3.5 -> 4, -2.5 -> -3.
long round_half_away(double x);

// ---------------------------------------------------------------------------
// Annotations

struct RadiologistEntry {
  std::string rad_id;
  double center_x = 0.0;  // column
  double center_y = 0.0;  // row
  int malignancy = 0;     // 1..5
};

// One slice of one nodule, with up to four readers.
struct AnnotationRecord {
  std::string image_path;
  std::string nodule_id;
  int slice_idx = 0;
  std::vector<RadiologistEntry> entries;

  bool operator==(const AnnotationRecord&) const;
};

struct PixelCenter {
  long x = 0;
  long y = 0;
  bool operator==(const PixelCenter&) const = default;
};

struct MergedAnnotation {
  PixelCenter center;  // mean reader center, rounded half away from zero
  int score = 0;       // mean reader score, rounded half away from zero
};

MergedAnnotation merge_annotations(const AnnotationRecord& record);

// Manifest CSV with header
//   image_path,nodule_id,slice_idx,rad_id,center_x,center_y,malignancy
// one row per reader per slice. Rows group into records by
// (nodule_id, slice_idx). Every malformed row is reported in one ParseError;
// image paths resolve against `base_dir` and must exist when `check_files`.
std::vector<AnnotationRecord> parse_manifest(const std::string& text,
                                             const std::filesystem::path& base_dir,
                                             bool check_files = true);
std::vector<AnnotationRecord> load_manifest(const std::filesystem::path& path);
std::string write_manifest(const std::vector<AnnotationRecord>& records);

// ---------------------------------------------------------------------------
// Samples

struct Provenance {
  std::string id;
  std::string root;     // lineage root; augmented copies share their source's
  std::string lineage;  // human-readable derivation chain
};

struct NoduleSample {
  Tensor<float> image;  // (1, 1, size, size)
  int score = 0;
  Label label = Label::benign;
  std::optional<std::vector<std::uint8_t>> mask;  // synthetic data only
  Provenance provenance;
};

// size x size window centered on `center`; pixels outside the slice are zero.
Tensor<float> crop_nodule(const Tensor<float>& slice, PixelCenter center, std::size_t size = 96);

// (x - min) / (max - min); a constant image maps to zeros.
template <typename Real>
Tensor<Real> minmax_normalize(const Tensor<Real>& image);

// ---------------------------------------------------------------------------
// Augmentation

struct ClassCounts {
  std::size_t benign = 0;
  std::size_t malignant = 0;

  std::size_t total() const { return benign + malignant; }
  bool operator==(const ClassCounts&) const = default;
};

ClassCounts count_labels(const std::vector<NoduleSample>& samples);

enum class AugmentSize { k15, k30, k60 };

AugmentSize parse_augment_size(const std::string& s);
std::string to_string(AugmentSize s);

// Per-class training targets for the preset augmentation sizes. Each
// class target is count * multiplier + increment, with the rule chosen per
// (variant, size); e.g. variant I at 15k adds 6000 to each class.
ClassCounts plan_augmentation(Variant variant, AugmentSize size, ClassCounts training_counts);

struct AugmentPolicy {
  double shift_fraction = 0.10;   // of the image extent
  double max_rotation_deg = 15.0;
  bool flips = true;
};

// Pixel transforms on (1, 1, H, W) images. Rotation is bilinear about the
// image center with zero fill; shifts are integral with zero fill.
Tensor<float> flip_horizontal(const Tensor<float>& image);
Tensor<float> flip_vertical(const Tensor<float>& image);
Tensor<float> shift_image(const Tensor<float>& image, long dx, long dy);
Tensor<float> rotate_image(const Tensor<float>& image, double degrees);

// Appends transformed copies of randomly chosen same-class originals until
// each class reaches its target. Originals come first and are untouched;
// copies record their source in the provenance. Copy j of class c depends
// only on (seed, c, j).
std::vector<NoduleSample> augment(const std::vector<NoduleSample>& samples, ClassCounts target,
                                  std::uint64_t seed, const AugmentPolicy& policy = {});

// ---------------------------------------------------------------------------
// Splitting

struct SplitPlan {
  std::uint64_t seed = 0;
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Stratified by class over lineage roots: every sample sharing a root lands
// in the same part. Per class, floor(ratio * roots) roots go to train and to
// val, the rest to test. A class that would leave a part with a positive
// ratio empty is a DataError.
SplitIndices split(const std::vector<NoduleSample>& samples, const SplitPlan& plan);

// Stratified k folds over lineage roots, dealt round-robin per class.
std::vector<std::vector<std::size_t>> kfold(const std::vector<NoduleSample>& samples,
                                            std::size_t k, std::uint64_t seed);

std::vector<NoduleSample> select(const std::vector<NoduleSample>& samples,
                                 const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// Synthetic data

// Balanced two-class set with ground-truth masks. Malignant-like samples are
// bright lobulated blobs (radius 8-20 px, boundary perturbed by harmonics
// 2-4); benign-like ones are smaller smooth disks (radius 4-8 px) at lower
// contrast. Both sit on correlated noise and are min-max normalized. Even
// indices are benign. Sample i depends only on (seed, i).
std::vector<NoduleSample> synth_generate(std::size_t n, std::uint64_t seed, std::size_t size = 96);

// ---------------------------------------------------------------------------
// Shards

// <prefix>.bin: per sample H*W little-endian float32, 1-byte label, 4-byte
// little-endian score. <prefix>.idx: text index with offsets and lineage.
// <prefix>.mask: H*W bytes per sample when every sample has a mask.
void write_shard(const std::filesystem::path& prefix, const std::vector<NoduleSample>& samples);
std::vector<NoduleSample> read_shard(const std::filesystem::path& prefix);

// Images stacked into (N, 1, H, W) with labels 0 (benign) / 1 (malignant).
LabeledImages<float> to_labeled(const std::vector<NoduleSample>& samples);

// ---------------------------------------------------------------------------
// Preparation pipeline

struct PrepareOptions {
  Variant variant = Variant::I;
  SplitPlan plan;
  std::optional<AugmentSize> augment_size;
  std::optional<ClassCounts> augment_target;  // explicit targets win over the size preset
  AugmentPolicy policy;
  std::size_t crop_size = 96;
  bool dry_run = false;  // labels and counts only; no pixels are read
};

struct PrepareStats {
  Variant variant = Variant::I;
  std::size_t records = 0;
  std::size_t excluded = 0;
  ClassCounts total;
  ClassCounts train, val, test;
  ClassCounts augmented_train;

  std::string report() const;
};

struct PreparedDataset {
  std::vector<NoduleSample> train, val, test;
  PrepareStats stats;
};

// Labels, splits (before augmenting, by nodule), then augments the training
// part to the requested targets.
PreparedDataset prepare_from_samples(std::vector<NoduleSample> samples, const PrepareOptions& options);
PreparedDataset prepare_from_manifest(const std::vector<AnnotationRecord>& records,
                                      const std::filesystem::path& base_dir,
                                      const PrepareOptions& options);

// Slice images referenced by manifests: binary PGM, converted to float.
Tensor<float> load_slice(const std::filesystem::path& path);

}  // namespace sisc
