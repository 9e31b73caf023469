#pragma once

#include "lqa/adapter.hpp"
#include "lqa/backbone.hpp"
#include "lqa/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>

namespace lqa {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a run needs: model shape, adapter switches and training
/// hyperparameters. Serialized as a flat JSON object.
struct Config {
  BackboneConfig backbone;
  AdapterConfig adapter;
  Index head_hidden = 64;
  std::uint64_t seed = 0;

  int epochs = 60;
  int batch_size = 2;
  AdamWConfig optim;
  /// Tail fraction of the training manifest held out when no separate
  /// validation manifest is given.
  Scalar val_fraction = 0.2;

  void validate() const;
};

/// Overlays the keys present in `j` onto `base`; unknown keys are an error.
Config config_from_json(const nlohmann::json& j, Config base = {});
nlohmann::ordered_json config_to_json(const Config& c);
Config load_config(const std::filesystem::path& path);

/// Small model used by gradient checks: 64x64 input, D=8.
Config gradcheck_config();

}  // namespace lqa
