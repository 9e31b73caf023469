#include "lqa/checkpoint.hpp"

#include "lqa/dataset.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lqa {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in host byte order");

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::ordered_json read_manifest_json(const fs::path& dir) {
  try {
    return nlohmann::ordered_json::parse(read_bytes(dir / kManifestFile));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace

void save_checkpoint(const Detector& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw CheckpointError("cannot create checkpoint directory " + dir.string());

  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  std::string blob;
  Index offset = 0;
  for (const Parameter& p : model.params().entries()) {
    nlohmann::ordered_json entry;
    entry["shape"] = p.value.shape();
    entry["offset"] = offset;
    entry["trainable"] = p.trainable;
    entry["frozen_hash"] = p.trainable ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(hex64(tensor_hash(p.value)));
    tensors[p.name] = std::move(entry);
    const auto bytes = static_cast<std::size_t>(p.value.size()) * sizeof(Scalar);
    blob.append(reinterpret_cast<const char*>(p.value.data().data()), bytes);
    offset += p.value.size();
  }

  nlohmann::ordered_json manifest;
  manifest["format"] = "lqa-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "float64-le";
  manifest["blob"] = kBlobFile;
  manifest["elements"] = offset;
  manifest["frozen_hash"] = hex64(frozen_hash(model.params()));
  manifest["config"] = config_to_json(model.config());
  manifest["tensors"] = std::move(tensors);

  write_file_atomic(dir / kBlobFile, blob);
  write_file_atomic(dir / kManifestFile, manifest.dump(2) + "\n");
}

void load_parameters(Detector& model, const fs::path& dir) {
  const nlohmann::ordered_json manifest = read_manifest_json(dir);
  if (manifest.value("format", "") != "lqa-checkpoint") throw CheckpointError("not an lqa checkpoint");
  const std::string blob = read_bytes(dir / kBlobFile);
  if (blob.size() % sizeof(Scalar) != 0) throw CheckpointError("blob length is not a multiple of 8 bytes");
  const Index blob_elements = static_cast<Index>(blob.size() / sizeof(Scalar));

  const auto& tensors = manifest.at("tensors");
  auto& entries = model.params().entries();
  if (tensors.size() != entries.size())
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(entries.size()));

  std::vector<Vector> staged;
  staged.reserve(entries.size());
  Index expected_offset = 0;
  try {
    for (const Parameter& p : entries) {
      if (!tensors.contains(p.name)) throw CheckpointError("checkpoint is missing tensor " + p.name);
      const auto& t = tensors.at(p.name);
      const Shape shape = t.at("shape").get<Shape>();
      if (shape != p.value.shape())
        throw CheckpointError("shape mismatch for " + p.name + ": checkpoint " + to_string(shape) + ", model " +
                              to_string(p.value.shape()));
      const Index offset = t.at("offset").get<Index>();
      if (offset != expected_offset) throw CheckpointError("non-contiguous offset for " + p.name);
      if (t.at("trainable").get<bool>() != p.trainable) throw CheckpointError("trainable flag mismatch for " + p.name);
      const Index n = num_elements(shape);
      if (offset + n > blob_elements) throw CheckpointError("blob truncated at tensor " + p.name);
      Vector v(n);
      std::memcpy(v.data(), blob.data() + offset * static_cast<Index>(sizeof(Scalar)),
                  static_cast<std::size_t>(n) * sizeof(Scalar));
      if (!v.allFinite()) throw CheckpointError("non-finite values in tensor " + p.name);
      if (!p.trainable) {
        const std::string h = hex64(fnv1a(v.data(), static_cast<std::size_t>(n) * sizeof(Scalar)));
        if (t.at("frozen_hash").get<std::string>() != h) throw CheckpointError("frozen hash mismatch for " + p.name);
      }
      staged.push_back(std::move(v));
      expected_offset += n;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed tensor entry: " + std::string(e.what()));
  }
  if (expected_offset != blob_elements)
    throw CheckpointError("blob holds " + std::to_string(blob_elements) + " values, manifest covers " +
                          std::to_string(expected_offset));
  if (manifest.contains("elements") && manifest.at("elements").get<Index>() != blob_elements)
    throw CheckpointError("manifest element count disagrees with blob");

  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].value.mutable_data() = std::move(staged[i]);
}

std::unique_ptr<Detector> load_checkpoint(const fs::path& dir) {
  const nlohmann::ordered_json manifest = read_manifest_json(dir);
  if (!manifest.contains("config")) throw CheckpointError("checkpoint manifest has no config");
  Config config;
  try {
    config = config_from_json(nlohmann::json::parse(manifest.at("config").dump()));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
  auto model = std::make_unique<Detector>(config);
  load_parameters(*model, dir);
  return model;
}

}  // namespace lqa
