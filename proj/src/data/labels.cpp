#include <cmath>

#include "sisc/data.hpp"

namespace sisc {

std::string to_string(Label l) {
  switch (l) {
    case Label::benign: return "benign";
    case Label::malignant: return "malignant";
    case Label::excluded: return "excluded";
  }
  return "?";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::I: return "I";
    case Variant::B: return "B";
    case Variant::M: return "M";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "I") return Variant::I;
  if (s == "B") return Variant::B;
  if (s == "M") return Variant::M;
  throw ConfigError("unknown dataset variant '" + s + "' (expected one of {I, B, M})");
}

Label assign_label(int score, Variant variant) {
  switch (score) {
    case 1:
    case 2: return Label::benign;
    case 4:
    case 5: return Label::malignant;
    case 3:
      switch (variant) {
        case Variant::I: return Label::excluded;
        case Variant::B: return Label::benign;
        case Variant::M: return Label::malignant;
      }
      break;
    default: break;
  }
  throw DataError("malignancy score " + std::to_string(score) + " outside [1, 5]");
}

long round_half_away(double x) {
  return static_cast<long>(x < 0 ? -std::floor(-x + 0.5) : std::floor(x + 0.5));
}

bool AnnotationRecord::operator==(const AnnotationRecord& o) const {
  if (image_path != o.image_path || nodule_id != o.nodule_id || slice_idx != o.slice_idx ||
      entries.size() != o.entries.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = o.entries[i];
    if (a.rad_id != b.rad_id || a.center_x != b.center_x || a.center_y != b.center_y ||
        a.malignancy != b.malignancy) {
      return false;
    }
  }
  return true;
}

MergedAnnotation merge_annotations(const AnnotationRecord& record) {
  if (record.entries.empty()) {
    throw DataError("nodule " + record.nodule_id + " slice " + std::to_string(record.slice_idx) +
                    " has no reader entries");
  }
  if (record.entries.size() > 4) {
    throw DataError("nodule " + record.nodule_id + " has " + std::to_string(record.entries.size()) +
                    " readers; at most 4 are allowed");
  }
  double sx = 0.0, sy = 0.0, ss = 0.0;
  for (const auto& e : record.entries) {
    if (e.malignancy < 1 || e.malignancy > 5) {
      throw DataError("malignancy score " + std::to_string(e.malignancy) + " outside [1, 5]");
    }
    sx += e.center_x;
    sy += e.center_y;
    ss += e.malignancy;
  }
  const double n = static_cast<double>(record.entries.size());
  MergedAnnotation m;
  m.center = PixelCenter{round_half_away(sx / n), round_half_away(sy / n)};
  m.score = static_cast<int>(round_half_away(ss / n));
  return m;
}

}  // namespace sisc
