#include "sisc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "sisc/error.hpp"
#include "sisc/io.hpp"

namespace sisc {

namespace {

void check_binary(std::span<const int> labels, const char* what) {
  for (int l : labels) {
    if (l != 0 && l != 1) {
      throw DataError(std::string(what) + " must be binary (0 benign, 1 malignant), got " +
                      std::to_string(l));
    }
  }
}

}  // namespace

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw DataError("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                    std::to_string(truth.size()) + " labels");
  }
  check_binary(predicted, "predictions");
  check_binary(truth, "labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1) {
      (predicted[i] == 1 ? c.tp : c.fn)++;
    } else {
      (predicted[i] == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

Metrics metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw DataError("metrics of an empty confusion table");
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fn > 0) m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return m;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("roc_auc: score/label length mismatch");
  check_binary(labels, "labels");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw DataError("roc_auc needs samples of both classes");
  for (double s : scores) {
    if (std::isnan(s)) throw DataError("roc_auc: NaN score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    const std::size_t tp0 = tp, fp0 = fp;
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    // trapezoid in count units; normalized once at the end
    area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) / 2.0;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  curve.auc = area / (static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

Aggregate cv_aggregate(std::span<const double> values, bool allow_single) {
  if (values.empty()) throw DataError("cv_aggregate: no folds");
  if (values.size() < 2 && !allow_single) {
    throw DataError("cv_aggregate: standard deviation needs at least 2 folds");
  }
  Aggregate a;
  a.count = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double sq = 0.0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return a;
}

std::string format_mean_std(const Aggregate& a, double scale) {
  char buf[64];
  if (a.stddev) {
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", a.mean * scale, *a.stddev * scale);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", a.mean * scale);
  }
  return buf;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? io::format_double(*v) : "NA"; }

std::string summary(const std::vector<double>& values) {
  if (values.empty()) return "NA";
  return format_mean_std(cv_aggregate(values, true));
}

}  // namespace

std::string metrics_report_csv(std::span<const FoldMetrics> folds) {
  std::ostringstream os;
  os << "fold,accuracy,sensitivity,specificity,auc\n";
  std::vector<double> acc, sens, spec, auc;
  for (const auto& f : folds) {
    os << f.fold << ',' << io::format_double(f.metrics.accuracy) << ',' << cell(f.metrics.sensitivity)
       << ',' << cell(f.metrics.specificity) << ',' << cell(std::isnan(f.auc) ? std::nullopt : std::optional(f.auc))
       << '\n';
    acc.push_back(f.metrics.accuracy);
    if (f.metrics.sensitivity) sens.push_back(*f.metrics.sensitivity);
    if (f.metrics.specificity) spec.push_back(*f.metrics.specificity);
    if (!std::isnan(f.auc)) auc.push_back(f.auc);
  }
  os << "mean±std," << summary(acc) << ',' << summary(sens) << ',' << summary(spec) << ','
     << summary(auc) << '\n';
  return os.str();
}

std::string roc_csv(const RocCurve& curve) {
  std::ostringstream os;
  os << "fpr,tpr\n";
  for (const auto& p : curve.points) os << io::format_double(p.fpr) << ',' << io::format_double(p.tpr) << '\n';
  return os.str();
}

}  // namespace sisc
