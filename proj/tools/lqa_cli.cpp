// Command-line entry points: synth-data, train, eval, gradcheck, param-count.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.

#include "lqa/checkpoint.hpp"
#include "lqa/config.hpp"
#include "lqa/dataset.hpp"
#include "lqa/gradcheck.hpp"
#include "lqa/model.hpp"
#include "lqa/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace lqa;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

Config config_or_default(const std::string& path) { return path.empty() ? config_from_json(nlohmann::json::object()) : load_config(path); }

int run_synth(Index n, std::uint64_t seed, Index size, const std::string& out) {
  SynthOptions options;
  options.count = n;
  options.seed = seed;
  options.size = size;
  const auto samples = gen_synthetic(options, out);
  std::cout << "wrote " << samples.size() << " samples to " << (fs::path(out) / "manifest.jsonl").string() << "\n";
  return kOk;
}

int run_train(const std::string& config_path, const std::string& data, const std::string& val_data,
              const std::string& out) {
  const Config config = config_or_default(config_path);
  std::vector<LoadedSample> train_set, val_set;
  if (!val_data.empty()) {
    train_set = load_dataset(data, config.backbone.image_size);
    val_set = load_dataset(val_data, config.backbone.image_size);
  } else {
    std::tie(train_set, val_set) = split_dataset(load_dataset(data, config.backbone.image_size), config.val_fraction);
    if (val_set.empty()) val_set = train_set;
  }
  if (train_set.empty()) throw DataError("training manifest is empty");

  fs::create_directories(out);
  Detector model(config);
  std::string log_text;
  const auto start = std::chrono::steady_clock::now();
  TrainOptions options;
  options.checkpoint_dir = fs::path(out);
  options.on_epoch = [&](const EpochLog& e) {
    nlohmann::ordered_json j{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_miou", e.val_miou}};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << j.dump() << "  (" << static_cast<int>(secs) << "s)" << std::endl;
    log_text += j.dump() + "\n";
    write_file_atomic(fs::path(out) / "train_log.jsonl", log_text);
  };
  const TrainResult result = train(model, train_set, val_set, options);
  std::cout << "best val mIoU " << result.best_miou << " at epoch " << result.best_epoch << "\n";
  if (result.frozen_hash_before != result.frozen_hash_after) {
    std::cerr << "error: frozen parameters changed during training\n";
    return kNumerical;
  }
  if (result.diverged) {
    std::cerr << "error: training diverged (" << result.failure << "); last good checkpoint kept in " << out << "\n";
    return kNumerical;
  }
  return kOk;
}

int run_eval(const std::string& checkpoint, const std::string& data, const std::string& report_path) {
  const auto model = load_checkpoint(checkpoint);
  const auto samples = load_dataset(data, model->config().backbone.image_size);
  const Evaluation e = evaluate(*model, samples);
  const std::string text = report_to_json(e.report).dump(2) + "\n";
  if (report_path.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(report_path, text);
    std::cout << "mIoU " << e.report.miou << "  precision " << e.report.localization.precision << "  recall "
              << e.report.localization.recall << "\n";
  }
  return kOk;
}

int run_gradcheck(const std::string& config_path, Scalar tol, std::uint64_t seed) {
  const Config config = config_path.empty() ? gradcheck_config() : load_config(config_path);
  Detector model(config);
  randomize_gates(model, seed);
  const GradCheckReport report = gradcheck_model(model, seed);
  for (const GradCheckEntry& e : report.entries)
    std::cout << (e.rel_error < tol ? "ok   " : "FAIL ") << e.name << " (" << e.size << ") rel_err " << e.rel_error
              << "\n";
  std::cout << "worst relative error " << report.worst << " (tol " << tol << ")\n";
  return report.passed(tol) ? kOk : kNumerical;
}

int run_param_count(const std::string& config_path) {
  Detector model(config_or_default(config_path));
  const ParamCount count = param_count(model);
  nlohmann::ordered_json j;
  j["trainable"] = count.trainable;
  j["frozen"] = count.frozen;
  j["total"] = count.total();
  j["lq_path_per_block"] = query_path_param_count(model.config().adapter.dim, model.config().adapter.lq_writeback);
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (const Parameter& p : model.params().entries()) {
    const std::string module = p.name.substr(0, p.name.find('.', p.name.find('.') + 1));
    groups[module] = groups.value(module, Index{0}) + p.value.size();
  }
  j["by_module"] = groups;
  std::cout << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LQ-Adapter desk-scale trainer and evaluator"};
  app.require_subcommand(1);

  Index n = 1, size = 64;
  std::uint64_t seed = 0;
  std::string out, config, data, val_data, checkpoint, report;
  Scalar tol = 1e-4;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic speckle dataset");
  synth->add_option("--n", n, "number of images")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--size", size, "image side in pixels (multiple of 32)");
  synth->add_option("--out", out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train the adapter and head");
  train_cmd->add_option("--config", config, "JSON config (defaults when omitted)");
  train_cmd->add_option("--data", data, "training manifest (JSONL)")->required();
  train_cmd->add_option("--val", val_data, "validation manifest; otherwise the tail val_fraction of --data");
  train_cmd->add_option("--out", out, "checkpoint directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--data", data, "manifest (JSONL)")->required();
  eval_cmd->add_option("--report", report, "report JSON path (stdout when omitted)");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every trainable parameter");
  grad_cmd->add_option("--config", config, "JSON config (small default when omitted)");
  grad_cmd->add_option("--tol", tol, "relative error tolerance");
  grad_cmd->add_option("--seed", seed, "probe seed");

  auto* count_cmd = app.add_subcommand("param-count", "trainable/frozen parameter accounting");
  count_cmd->add_option("--config", config, "JSON config (defaults when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return run_synth(n, seed, size, out);
    if (*train_cmd) return run_train(config, data, val_data, out);
    if (*eval_cmd) return run_eval(checkpoint, data, report);
    if (*grad_cmd) return run_gradcheck(config, tol, seed);
    if (*count_cmd) return run_param_count(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
