#pragma once

#include "lqa/model.hpp"

#include <filesystem>
#include <memory>
#include <stdexcept>

namespace lqa {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "params.bin";

/// Writes `dir/manifest.json` (config plus name -> {shape, offset, trainable,
/// frozen_hash}, offsets in float64 elements) and `dir/params.bin` (raw
/// little-endian float64 values in registration order).
void save_checkpoint(const Detector& model, const std::filesystem::path& dir);

/// Rebuilds the model from the embedded config and restores every tensor.
/// Any inconsistency throws before a model is returned.
std::unique_ptr<Detector> load_checkpoint(const std::filesystem::path& dir);

/// Restores tensors into an existing model; validates names and shapes
/// against it. Nothing is modified when validation fails.
void load_parameters(Detector& model, const std::filesystem::path& dir);

}  // namespace lqa
