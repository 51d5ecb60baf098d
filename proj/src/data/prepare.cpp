#include <map>
#include <sstream>

#include "sisc/data.hpp"

namespace sisc {

namespace {

void put_counts(std::ostringstream& out, const char* part, const ClassCounts& c) {
  out << part << ".benign = " << c.benign << "\n"
      << part << ".malignant = " << c.malignant << "\n";
}

// One score per nodule: each reader contributes the score from the first
// slice they annotated, and the reader mean is rounded.
std::map<std::string, int> nodule_scores(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::map<std::string, int>> readers;
  for (const auto& r : records) {
    auto& per_reader = readers[r.nodule_id];
    for (const auto& e : r.entries) per_reader.emplace(e.rad_id, e.malignancy);
  }
  std::map<std::string, int> out;
  for (const auto& [nodule, per_reader] : readers) {
    double sum = 0.0;
    for (const auto& [rad, score] : per_reader) sum += score;
    out[nodule] = static_cast<int>(round_half_away(sum / static_cast<double>(per_reader.size())));
  }
  return out;
}

}  // namespace

std::string PrepareStats::report() const {
  std::ostringstream out;
  out << "variant = " << to_string(variant) << "\n"
      << "records = " << records << "\n"
      << "excluded = " << excluded << "\n";
  put_counts(out, "total", total);
  put_counts(out, "train", train);
  put_counts(out, "val", val);
  put_counts(out, "test", test);
  put_counts(out, "augmented_train", augmented_train);
  return out.str();
}

PreparedDataset prepare_from_samples(std::vector<NoduleSample> samples, const PrepareOptions& options) {
  PreparedDataset out;
  out.stats.variant = options.variant;
  out.stats.records = samples.size();

  std::vector<NoduleSample> kept;
  kept.reserve(samples.size());
  for (auto& s : samples) {
    s.label = assign_label(s.score, options.variant);
    if (s.label == Label::excluded) {
      ++out.stats.excluded;
    } else {
      kept.push_back(std::move(s));
    }
  }
  out.stats.total = count_labels(kept);

  const SplitIndices parts = split(kept, options.plan);
  out.train = select(kept, parts.train);
  out.val = select(kept, parts.val);
  out.test = select(kept, parts.test);
  out.stats.train = count_labels(out.train);
  out.stats.val = count_labels(out.val);
  out.stats.test = count_labels(out.test);

  ClassCounts target = out.stats.train;
  if (options.augment_target) {
    target = *options.augment_target;
  } else if (options.augment_size) {
    target = plan_augmentation(options.variant, *options.augment_size, out.stats.train);
  }
  if (target.benign < out.stats.train.benign || target.malignant < out.stats.train.malignant) {
    throw ConfigError("augmentation target is below the training counts");
  }
  out.stats.augmented_train = target;
  if (!options.dry_run && target != out.stats.train) {
    out.train = augment(out.train, target, mix_seed(options.plan.seed, 3), options.policy);
  }
  return out;
}

PreparedDataset prepare_from_manifest(const std::vector<AnnotationRecord>& records,
                                      const std::filesystem::path& base_dir,
                                      const PrepareOptions& options) {
  const auto scores = nodule_scores(records);
  std::vector<NoduleSample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    const MergedAnnotation merged = merge_annotations(r);
    NoduleSample s;
    s.score = scores.at(r.nodule_id);
    if (!options.dry_run) {
      std::filesystem::path path = r.image_path;
      if (path.is_relative()) path = base_dir / path;
      const Tensor<float> slice = load_slice(path);
      s.image = minmax_normalize(crop_nodule(slice, merged.center, options.crop_size));
    }
    s.provenance.id = r.nodule_id + "/" + std::to_string(r.slice_idx);
    s.provenance.root = r.nodule_id;
    s.provenance.lineage = s.provenance.id;
    samples.push_back(std::move(s));
  }
  return prepare_from_samples(std::move(samples), options);
}

}  // namespace sisc
