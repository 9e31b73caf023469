#include "lqa/train.hpp"

#include "lqa/checkpoint.hpp"
#include "lqa/head.hpp"
#include "lqa/optim.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace lqa {

BatchGradients batch_gradients(const Detector& model, std::span<const LoadedSample* const> batch) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  Tape tape;
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const LoadedSample* s : batch) losses.push_back(box_loss(model.forward(s->image).box, s->box));
  Tensor total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  const Tensor loss = scale(total, 1.0 / static_cast<Scalar>(batch.size()));
  BatchGradients out;
  out.loss = loss.item();
  out.grads = tape.backward(loss);
  return out;
}

Scalar mean_loss(const Detector& model, std::span<const LoadedSample> data) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty dataset");
  Scalar total = 0;
  for (const LoadedSample& s : data) total += box_loss_value(model.predict(s.image), s.box);
  return total / static_cast<Scalar>(data.size());
}

Evaluation evaluate_predictions(std::span<const BBox> predictions, std::span<const LoadedSample> data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (predictions.size() != data.size()) throw std::invalid_argument("evaluate: prediction count mismatch");
  std::vector<std::optional<BBox>> preds(predictions.begin(), predictions.end());
  std::vector<BBox> gts;
  std::vector<int> pred_labels(data.size(), 1), true_labels;
  for (const LoadedSample& s : data) {
    gts.push_back(s.box);
    true_labels.push_back(s.label);
  }
  Evaluation e;
  e.report = make_report(preds, gts, pred_labels, true_labels);
  e.predictions.assign(predictions.begin(), predictions.end());
  return e;
}

Evaluation evaluate(const Detector& model, std::span<const LoadedSample> data) {
  std::vector<BBox> predictions;
  predictions.reserve(data.size());
  for (const LoadedSample& s : data) predictions.push_back(model.predict(s.image));
  return evaluate_predictions(predictions, data);
}

TrainResult train(Detector& model, std::span<const LoadedSample> train_set, std::span<const LoadedSample> val_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("train: training set is empty");
  if (val_set.empty()) throw std::invalid_argument("train: validation set is empty");
  const Config& config = model.config();

  TrainResult result;
  result.frozen_hash_before = frozen_hash(model.params());
  AdamW optimizer(model.params(), config.optim);

  auto record = [&](const EpochLog& entry) {
    result.log.push_back(entry);
    if (entry.epoch == 0 || entry.val_miou > result.best_miou) {
      result.best_miou = entry.val_miou;
      result.best_epoch = entry.epoch;
      if (options.checkpoint_dir) save_checkpoint(model, *options.checkpoint_dir);
    }
    if (options.on_epoch) options.on_epoch(entry);
  };

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed ^ 0x5eed5eed5eed5eedULL);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  try {
    record({0, mean_loss(model, train_set), evaluate(model, val_set).report.miou});
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      Scalar loss_sum = 0;
      std::vector<const LoadedSample*> batch;
      for (std::size_t start = 0; start < order.size(); start += batch_size) {
        batch.clear();
        for (std::size_t i = start; i < std::min(start + batch_size, order.size()); ++i)
          batch.push_back(&train_set[order[i]]);
        BatchGradients bg = batch_gradients(model, batch);
        if (!std::isfinite(bg.loss)) throw NumericalError("non-finite training loss");
        optimizer.step(bg.grads);
        loss_sum += bg.loss * static_cast<Scalar>(batch.size());
      }
      record({epoch, loss_sum / static_cast<Scalar>(order.size()), evaluate(model, val_set).report.miou});
    }
  } catch (const NumericalError& e) {
    result.diverged = true;
    result.failure = e.what();
  }
  result.frozen_hash_after = frozen_hash(model.params());
  return result;
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["miou"] = r.miou;
  j["precision"] = r.localization.precision;
  j["recall"] = r.localization.recall;
  j["accuracy"] = r.classification.accuracy;
  j["specificity"] = r.classification.specificity;
  j["sensitivity"] = r.classification.sensitivity;
  j["counts"] = {{"true_positives", r.localization.true_positives},
                 {"false_positives", r.localization.false_positives},
                 {"false_negatives", r.localization.false_negatives}};
  nlohmann::ordered_json flags = nlohmann::ordered_json::array();
  if (r.localization.precision_undefined) flags.push_back("precision_undefined");
  if (r.localization.recall_undefined) flags.push_back("recall_undefined");
  if (r.classification.specificity_undefined) flags.push_back("specificity_undefined");
  if (r.classification.sensitivity_undefined) flags.push_back("sensitivity_undefined");
  j["flags"] = flags;
  j["notes"] = {
      "single-box head emits exactly one prediction per image: false negatives by absence cannot occur",
      "predicted label is 1 for every image (a box is always emitted)"};
  j["per_sample_iou"] = r.per_sample_iou;
  return j;
}

std::pair<std::vector<LoadedSample>, std::vector<LoadedSample>> split_dataset(std::vector<LoadedSample> data,
                                                                              Scalar fraction) {
  const auto n = data.size();
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<Scalar>(n)));
  std::vector<LoadedSample> val(data.end() - static_cast<std::ptrdiff_t>(held), data.end());
  data.resize(n - held);
  return {std::move(data), std::move(val)};
}

}  // namespace lqa
