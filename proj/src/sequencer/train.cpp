#include <cmath>
#include <limits>
#include <numeric>

#include "sisc/eval.hpp"
#include "sisc/sequencer.hpp"

namespace sisc {

template <typename Real>
Tensor<Real> LabeledImages<Real>::gather(std::span<const std::size_t> indices) const {
  const Shape& s = images.shape();
  Tensor<Real> out(Shape{indices.size(), s.c, s.h, s.w});
  const std::size_t per = s.per_sample();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= s.n) throw DataError("gather: index out of range");
    auto src = images.sample(indices[i]);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

namespace {

template <typename Real>
void check_set(const LabeledImages<Real>& set, const SequencerConfig& config, const char* name) {
  if (set.size() == 0) throw DataError(std::string(name) + " set is empty");
  if (set.images.shape().n != set.labels.size()) {
    throw DataError(std::string(name) + " set has " + std::to_string(set.images.shape().n) +
                    " images but " + std::to_string(set.labels.size()) + " labels");
  }
  for (int l : set.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= config.class_count) {
      throw DataError(std::string(name) + " set has label " + std::to_string(l) + " outside [0, " +
                      std::to_string(config.class_count) + ")");
    }
  }
}

}  // namespace

template <typename Real>
Evaluation evaluate(const Sequencer<Real>& model, const LabeledImages<Real>& set,
                    std::size_t batch_size) {
  check_set(set, model.config, "evaluation");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  Evaluation ev;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t end = std::min(set.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto r = forward(model, set.gather(idx));
    const std::span<const int> labels(set.labels.data() + start, end - start);
    loss += softmax_xent(r.trace.logits, labels).loss * static_cast<double>(end - start);
    const std::size_t classes = r.probs.shape().c;
    for (std::size_t n = 0; n < end - start; ++n) {
      std::vector<double> p(classes);
      for (std::size_t c = 0; c < classes; ++c) p[c] = r.probs(n, c, 0, 0);
      const int cls = argmax_prediction(p).class_id;
      ev.predicted.push_back(cls);
      ev.positive_scores.push_back(classes > 1 ? p[1] : p[0]);
      if (cls == labels[n]) ++correct;
    }
  }
  ev.loss = loss / static_cast<double>(set.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return ev;
}

template <typename Real>
TrainResult<Real> train(Sequencer<Real> model, const LabeledImages<Real>& train_set,
                        const LabeledImages<Real>& val_set, const TrainSchedule& schedule,
                        const std::function<void(const EpochRecord&)>& on_epoch) {
  check_set(train_set, model.config, "training");
  check_set(val_set, model.config, "validation");
  if (schedule.batch_size == 0) throw ConfigError("batch size must be positive");

  Rng shuffle_rng(mix_seed(schedule.seed, 1));
  Rng dropout_rng(mix_seed(schedule.seed, 2));
  AdamState<Real> adam;
  adam.lr = schedule.lr;

  TrainResult<Real> result;
  double best_accuracy = -1.0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train_set.labels[i]);
      try {
        auto fwd = forward(model, train_set.gather(idx), Mode::train, dropout_rng);
        auto grads = backward(model, fwd.trace, labels);
        if (!std::isfinite(grads.loss)) throw NumericError("loss is " + std::to_string(grads.loss));
        adam_step(model, grads, adam);
        loss_sum += grads.loss * static_cast<double>(idx.size());
        for (std::size_t n = 0; n < idx.size(); ++n) {
          std::vector<double> p(fwd.probs.shape().c);
          for (std::size_t c = 0; c < p.size(); ++c) p[c] = fwd.probs(n, c, 0, 0);
          if (argmax_prediction(p).class_id == labels[n]) ++correct;
        }
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    const Evaluation ev = evaluate(model, val_set, schedule.batch_size);
    rec.val_loss = ev.loss;
    rec.val_accuracy = ev.accuracy;
    rec.val_auc = std::numeric_limits<double>::quiet_NaN();
    const bool both = std::count(val_set.labels.begin(), val_set.labels.end(), 1) > 0 &&
                      std::count(val_set.labels.begin(), val_set.labels.end(), 0) > 0;
    if (both && model.config.class_count == 2) rec.val_auc = roc_auc(ev.positive_scores, val_set.labels).auc;
    result.history.push_back(rec);
    if (rec.val_accuracy > best_accuracy) {
      best_accuracy = rec.val_accuracy;
      result.best = model;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
  }
  if (schedule.epochs == 0) result.best = model;
  result.last = std::move(model);
  return result;
}

template struct LabeledImages<float>;
template struct LabeledImages<double>;
template Evaluation evaluate(const Sequencer<float>&, const LabeledImages<float>&, std::size_t);
template Evaluation evaluate(const Sequencer<double>&, const LabeledImages<double>&, std::size_t);
template TrainResult<float> train(Sequencer<float>, const LabeledImages<float>&,
                                  const LabeledImages<float>&, const TrainSchedule&,
                                  const std::function<void(const EpochRecord&)>&);
template TrainResult<double> train(Sequencer<double>, const LabeledImages<double>&,
                                   const LabeledImages<double>&, const TrainSchedule&,
                                   const std::function<void(const EpochRecord&)>&);

}  // namespace sisc
