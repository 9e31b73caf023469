#include "lqa/config.hpp"

#include <fstream>
#include <numeric>
#include <set>
#include <string>

namespace lqa {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "image_size", "patch_size", "dim",         "depth",      "num_blocks",   "heads",
      "ffn_ratio",  "lq_count",   "lq_init",     "lq_blocks",  "lq_writeback", "head_hidden",
      "seed",       "epochs",     "batch_size",  "lr",         "weight_decay", "layer_decay",
      "val_fraction"};
  return keys;
}

std::vector<Index> all_blocks(Index n) {
  std::vector<Index> blocks(static_cast<std::size_t>(n));
  std::iota(blocks.begin(), blocks.end(), Index{0});
  return blocks;
}

}  // namespace

void Config::validate() const {
  backbone.validate();
  adapter.validate();
  if (backbone.image_size % 32 != 0) throw ConfigError("image_size must be divisible by 32");
  if (head_hidden <= 0) throw ConfigError("head_hidden must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (optim.lr < 0) throw ConfigError("lr must be non-negative");
  if (!(optim.layer_decay > 0 && optim.layer_decay <= 1)) throw ConfigError("layer_decay must be in (0, 1]");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("val_fraction must be in [0, 1)");
}

Config config_from_json(const nlohmann::json& j, Config c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known_keys().contains(key)) throw ConfigError("unknown config key: " + key);

  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("image_size", c.backbone.image_size);
    get("patch_size", c.backbone.patch_size);
    get("dim", c.backbone.dim);
    get("depth", c.backbone.depth);
    get("heads", c.backbone.heads);
    get("ffn_ratio", c.backbone.ffn_ratio);
    const bool blocks_changed = j.contains("num_blocks");
    get("num_blocks", c.backbone.stages);
    c.adapter.num_blocks = c.backbone.stages;
    c.adapter.dim = c.backbone.dim;
    c.adapter.heads = c.backbone.heads;
    c.adapter.ffn_ratio = c.backbone.ffn_ratio;
    get("lq_count", c.adapter.lq_count);
    if (j.contains("lq_init")) {
      const std::string init = j.at("lq_init").get<std::string>();
      if (init == "zero") {
        c.adapter.lq_init = QueryInit::Zero;
      } else if (init == "random") {
        c.adapter.lq_init = QueryInit::Random;
      } else {
        throw ConfigError("lq_init must be \"zero\" or \"random\", got \"" + init + "\"");
      }
    }
    if (j.contains("lq_blocks")) {
      const auto& b = j.at("lq_blocks");
      if (b.is_string() && b.get<std::string>() == "all") {
        c.adapter.lq_blocks = all_blocks(c.adapter.num_blocks);
      } else if (b.is_string() && b.get<std::string>() == "none") {
        c.adapter.lq_blocks.clear();
      } else {
        c.adapter.lq_blocks = b.get<std::vector<Index>>();
      }
    } else if (blocks_changed) {
      c.adapter.lq_blocks = all_blocks(c.adapter.num_blocks);
    }
    get("lq_writeback", c.adapter.lq_writeback);
    get("head_hidden", c.head_hidden);
    get("seed", c.seed);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr", c.optim.lr);
    get("weight_decay", c.optim.weight_decay);
    get("layer_decay", c.optim.layer_decay);
    get("val_fraction", c.val_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.optim.num_groups = static_cast<int>(c.adapter.num_blocks);
  try {
    c.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

nlohmann::ordered_json config_to_json(const Config& c) {
  nlohmann::ordered_json j;
  j["image_size"] = c.backbone.image_size;
  j["patch_size"] = c.backbone.patch_size;
  j["dim"] = c.backbone.dim;
  j["depth"] = c.backbone.depth;
  j["num_blocks"] = c.adapter.num_blocks;
  j["heads"] = c.backbone.heads;
  j["ffn_ratio"] = c.backbone.ffn_ratio;
  j["lq_count"] = c.adapter.lq_count;
  j["lq_init"] = c.adapter.lq_init == QueryInit::Zero ? "zero" : "random";
  j["lq_blocks"] = c.adapter.lq_blocks;
  j["lq_writeback"] = c.adapter.lq_writeback;
  j["head_hidden"] = c.head_hidden;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.optim.lr;
  j["weight_decay"] = c.optim.weight_decay;
  j["layer_decay"] = c.optim.layer_decay;
  j["val_fraction"] = c.val_fraction;
  return j;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

Config gradcheck_config() {
  return config_from_json({{"image_size", 64}, {"dim", 8}, {"heads", 2}, {"depth", 4}, {"num_blocks", 4},
                           {"ffn_ratio", 2}, {"lq_count", 4}, {"head_hidden", 8}});
}

}  // namespace lqa
