#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sisc {

// Binary confusion counts with malignant (label 1) as the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth);

// Sensitivity/specificity are empty when their denominator is zero.
struct Metrics {
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

Metrics metrics(const ConfusionCounts& c);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) ... (1,1)
  double auc = 0.0;
};

// Threshold sweep over the distinct scores, highest first. Tied scores move
// both rates at once (a diagonal segment), so the trapezoid area equals the
// Mann-Whitney statistic.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

struct Aggregate {
  double mean = 0.0;
  std::optional<double> stddev;  // sample (n-1) standard deviation
  std::size_t count = 0;
};

// Mean and sample standard deviation over folds. Fewer than two folds is a
// DataError unless `allow_single`, in which case only the mean is reported.
Aggregate cv_aggregate(std::span<const double> values, bool allow_single = false);

// "84.17±1.50" in percent, or "84.17" when there is no spread.
std::string format_mean_std(const Aggregate& a, double scale = 100.0);

struct FoldMetrics {
  std::string fold;
  Metrics metrics;
  double auc = 0.0;
};

// CSV `fold,accuracy,sensitivity,specificity,auc`; per-fold values in full
// precision, then a `mean±std` summary row in percent. Undefined values
// print as NA.
std::string metrics_report_csv(std::span<const FoldMetrics> folds);

// CSV `fpr,tpr`.
std::string roc_csv(const RocCurve& curve);

}  // namespace sisc
