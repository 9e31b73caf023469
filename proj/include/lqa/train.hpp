#pragma once

#include "lqa/boxes.hpp"
#include "lqa/dataset.hpp"
#include "lqa/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lqa {

struct EpochLog {
  int epoch = 0;  // 0 is the untrained model
  Scalar train_loss = 0;
  Scalar val_miou = 0;
};

struct TrainOptions {
  /// Best-validation-mIoU checkpoint destination; nothing is written when empty.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Called after every logged epoch.
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  Scalar best_miou = 0;
  int best_epoch = 0;
  std::uint64_t frozen_hash_before = 0;
  std::uint64_t frozen_hash_after = 0;
  /// Set when a non-finite loss or gradient stopped the run early.
  bool diverged = false;
  std::string failure;
};

/// Mean box loss of one forward/backward pass over `batch`, with gradients
/// averaged over the batch.
struct BatchGradients {
  Scalar loss = 0;
  GradientMap grads;
};
BatchGradients batch_gradients(const Detector& model, std::span<const LoadedSample* const> batch);

Scalar mean_loss(const Detector& model, std::span<const LoadedSample> data);

/// AdamW with layer-wise decay on trainable parameters only; shuffling and
/// initialization are driven by config().seed.
TrainResult train(Detector& model, std::span<const LoadedSample> train_set, std::span<const LoadedSample> val_set,
                  const TrainOptions& options = {});

struct Evaluation {
  MetricsReport report;
  std::vector<BBox> predictions;
};

/// Deterministic full-dataset report. The single-box head always emits a
/// prediction, so every predicted label is 1.
Evaluation evaluate(const Detector& model, std::span<const LoadedSample> data);
Evaluation evaluate_predictions(std::span<const BBox> predictions, std::span<const LoadedSample> data);

nlohmann::ordered_json report_to_json(const MetricsReport& report);

/// Splits off the trailing `fraction` of samples as validation data.
std::pair<std::vector<LoadedSample>, std::vector<LoadedSample>> split_dataset(std::vector<LoadedSample> data,
                                                                              Scalar fraction);

}  // namespace lqa
