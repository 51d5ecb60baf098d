#include <array>
#include <cmath>

#include "sisc/data.hpp"

namespace sisc {

namespace {

struct Rule {
  std::size_t multiplier = 1;
  std::size_t increment = 0;

  std::size_t apply(std::size_t count) const { return count * multiplier + increment; }
};

struct ClassRules {
  Rule benign;
  Rule malignant;
};

// Indexed [variant][size].
constexpr std::array<std::array<ClassRules, 3>, 3> kRules{{
    {{{{1, 6000}, {1, 6000}}, {{1, 12000}, {1, 12000}}, {{1, 27000}, {1, 27000}}}},
    {{{{1, 0}, {2, 0}}, {{1, 14000}, {5, 0}}, {{1, 28000}, {10, 0}}}},
    {{{{2, 0}, {1, 0}}, {{5, 0}, {1, 8000}}, {{9, 0}, {4, 0}}}},
}};

// Bilinear resampling leaves values in between 0 and 1; masks snap back.
std::vector<std::uint8_t> threshold_mask(const Tensor<float>& t) {
  std::vector<std::uint8_t> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] >= 0.5f ? 1 : 0;
  return out;
}

Tensor<float> mask_tensor(const std::vector<std::uint8_t>& mask, const Shape& shape) {
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < mask.size(); ++i) t[i] = mask[i] ? 1.0f : 0.0f;
  return t;
}

}  // namespace

ClassCounts count_labels(const std::vector<NoduleSample>& samples) {
  ClassCounts c;
  for (const auto& s : samples) {
    if (s.label == Label::benign) ++c.benign;
    if (s.label == Label::malignant) ++c.malignant;
  }
  return c;
}

AugmentSize parse_augment_size(const std::string& s) {
  if (s == "15k") return AugmentSize::k15;
  if (s == "30k") return AugmentSize::k30;
  if (s == "60k") return AugmentSize::k60;
  throw ConfigError("augmentation size '" + s + "' is not one of {15k, 30k, 60k}");
}

std::string to_string(AugmentSize s) {
  switch (s) {
    case AugmentSize::k15: return "15k";
    case AugmentSize::k30: return "30k";
    case AugmentSize::k60: return "60k";
  }
  return "?";
}

ClassCounts plan_augmentation(Variant variant, AugmentSize size, ClassCounts training_counts) {
  const ClassRules& r = kRules[static_cast<std::size_t>(variant)][static_cast<std::size_t>(size)];
  return {r.benign.apply(training_counts.benign), r.malignant.apply(training_counts.malignant)};
}

std::vector<NoduleSample> augment(const std::vector<NoduleSample>& samples, ClassCounts target,
                                  std::uint64_t seed, const AugmentPolicy& policy) {
  const ClassCounts current = count_labels(samples);
  if (target.benign < current.benign || target.malignant < current.malignant) {
    throw ConfigError("augmentation target (" + std::to_string(target.benign) + " benign, " +
                      std::to_string(target.malignant) + " malignant) is below the current counts (" +
                      std::to_string(current.benign) + ", " + std::to_string(current.malignant) + ")");
  }
  if (policy.shift_fraction < 0 || policy.shift_fraction >= 1 || policy.max_rotation_deg < 0) {
    throw ConfigError("augmentation policy out of range");
  }

  std::vector<NoduleSample> out = samples;
  out.reserve(samples.size() + (target.total() - current.total()));

  for (const Label cls : {Label::benign, Label::malignant}) {
    std::vector<std::size_t> sources;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].label == cls) sources.push_back(i);
    }
    const std::size_t want = cls == Label::benign ? target.benign : target.malignant;
    const std::size_t missing = want - sources.size();
    if (missing > 0 && sources.empty()) {
      throw ConfigError("cannot augment class " + to_string(cls) + ": no originals");
    }
    const auto class_bits = static_cast<std::uint64_t>(cls) << 32;
    for (std::size_t j = 0; j < missing; ++j) {
      Rng rng(mix_seed(seed, class_bits + j));
      const NoduleSample& src = samples[sources[rng.below(sources.size())]];
      const Shape shape = src.image.shape();

      const bool flip_h = policy.flips && rng.bernoulli(0.5);
      const bool flip_v = policy.flips && rng.bernoulli(0.5);
      const double angle = rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
      const auto max_dx = static_cast<long>(std::floor(policy.shift_fraction * static_cast<double>(shape.w)));
      const auto max_dy = static_cast<long>(std::floor(policy.shift_fraction * static_cast<double>(shape.h)));
      const long dx = static_cast<long>(rng.below(static_cast<std::uint64_t>(2 * max_dx + 1))) - max_dx;
      const long dy = static_cast<long>(rng.below(static_cast<std::uint64_t>(2 * max_dy + 1))) - max_dy;

      auto transform = [&](Tensor<float> t) {
        if (flip_h) t = flip_horizontal(t);
        if (flip_v) t = flip_vertical(t);
        t = rotate_image(t, angle);
        return shift_image(t, dx, dy);
      };

      NoduleSample copy;
      copy.image = transform(src.image);
      copy.score = src.score;
      copy.label = src.label;
      if (src.mask) copy.mask = threshold_mask(transform(mask_tensor(*src.mask, shape)));
      const std::string tag = ">aug" + std::to_string(j);
      copy.provenance.id = src.provenance.id + tag;
      copy.provenance.root = src.provenance.root.empty() ? src.provenance.id : src.provenance.root;
      copy.provenance.lineage =
          (src.provenance.lineage.empty() ? src.provenance.id : src.provenance.lineage) + tag;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace sisc
