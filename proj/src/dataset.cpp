#include "lqa/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace lqa {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

}  // namespace

GrayImage read_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  if (pgm_token(bytes, pos) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  GrayImage img;
  long maxval = 0;
  try {
    img.width = std::stol(pgm_token(bytes, pos));
    img.height = std::stol(pgm_token(bytes, pos));
    maxval = std::stol(pgm_token(bytes, pos));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
    throw DataError(path.string() + ": unsupported PGM geometry or maxval");
  ++pos;  // single whitespace byte before the raster
  const auto n = static_cast<std::size_t>(img.width * img.height);
  if (bytes.size() < pos + n) throw DataError(path.string() + ": truncated PGM raster");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  std::string bytes = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  bytes.append(image.pixels.begin(), image.pixels.end());
  write_file_atomic(path, bytes);
}

Tensor image_tensor(const GrayImage& image) {
  Vector values(image.width * image.height);
  const auto [lo, hi] = std::minmax_element(image.pixels.begin(), image.pixels.end());
  const Scalar range = static_cast<Scalar>(*hi) - static_cast<Scalar>(*lo);
  for (Index i = 0; i < values.size(); ++i) {
    const Scalar v = static_cast<Scalar>(image.pixels[static_cast<std::size_t>(i)]) - static_cast<Scalar>(*lo);
    values[i] = range > 0 ? v / range : 0.0;
  }
  return Tensor::from({1, image.height, image.width}, std::move(values));
}

std::vector<Sample> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      Sample s;
      s.image = j.at("image").get<std::string>();
      const auto box = j.at("box").get<std::vector<Scalar>>();
      if (box.size() != 4) throw DataError(where + ": box must have 4 values");
      s.box = BBox{box[0], box[1], box[2], box[3]}.clipped();
      s.label = j.value("label", 1);
      if (s.label != 0 && s.label != 1) throw DataError(where + ": label must be 0 or 1");
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return samples;
}

void write_manifest(const fs::path& path, const std::vector<Sample>& samples) {
  std::string out;
  for (const Sample& s : samples) {
    nlohmann::ordered_json j;
    j["image"] = s.image;
    j["box"] = {s.box.cx, s.box.cy, s.box.w, s.box.h};
    j["label"] = s.label;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<LoadedSample> load_dataset(const fs::path& manifest, Index expected_size) {
  const std::vector<Sample> samples = read_manifest(manifest);
  const fs::path root = manifest.parent_path();
  std::vector<LoadedSample> loaded;
  loaded.reserve(samples.size());
  for (const Sample& s : samples) {
    const fs::path image_path = fs::path(s.image).is_absolute() ? fs::path(s.image) : root / s.image;
    const GrayImage img = read_pgm(image_path);
    if (expected_size > 0 && (img.width != expected_size || img.height != expected_size))
      throw DataError(image_path.string() + ": expected " + std::to_string(expected_size) + "x" +
                      std::to_string(expected_size) + " image, got " + std::to_string(img.width) + "x" +
                      std::to_string(img.height));
    loaded.push_back({image_tensor(img), s.box, s.label});
  }
  return loaded;
}

std::vector<Sample> gen_synthetic(const SynthOptions& o, const fs::path& out_dir) {
  if (o.count < 1) throw std::invalid_argument("gen_synthetic: count must be at least 1");
  if (o.size < 32 || o.size % 32 != 0) throw std::invalid_argument("gen_synthetic: size must be a multiple of 32");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create output directory " + out_dir.string());

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  std::gamma_distribution<Scalar> speckle(o.looks, 1.0 / o.looks);
  const Scalar size = static_cast<Scalar>(o.size);
  const Scalar min_axis = 0.08 * size, max_axis = 0.25 * size;

  std::vector<Sample> samples;
  for (Index n = 0; n < o.count; ++n) {
    // Lesion geometry: semi-axes in pixels, rejection keeps the area bound.
    Scalar a = 0, b = 0;
    do {
      a = min_axis + (max_axis - min_axis) * unit(rng);
      b = min_axis + (max_axis - min_axis) * unit(rng);
    } while (std::numbers::pi * a * b > o.max_area * size * size);
    const Scalar theta = std::numbers::pi * unit(rng);
    const Scalar c = std::cos(theta), s = std::sin(theta);
    const Scalar half_w = std::sqrt(a * a * c * c + b * b * s * s);
    const Scalar half_h = std::sqrt(a * a * s * s + b * b * c * c);
    const Scalar margin = 2.0;
    const Scalar cx = half_w + margin + (size - 2 * (half_w + margin)) * unit(rng);
    const Scalar cy = half_h + margin + (size - 2 * (half_h + margin)) * unit(rng);

    // Smooth background: low-frequency shading plus a depth gradient.
    const Scalar fx = 0.5 + unit(rng), fy = 0.5 + unit(rng);
    const Scalar px = 2 * std::numbers::pi * unit(rng), py = 2 * std::numbers::pi * unit(rng);
    const Scalar tilt = 0.2 * (unit(rng) - 0.5);

    GrayImage img;
    img.width = img.height = o.size;
    img.pixels.resize(static_cast<std::size_t>(o.size * o.size));
    for (Index y = 0; y < o.size; ++y) {
      for (Index x = 0; x < o.size; ++x) {
        const Scalar u = (static_cast<Scalar>(x) + 0.5) / size, v = (static_cast<Scalar>(y) + 0.5) / size;
        Scalar base = 0.55 + 0.12 * std::sin(2 * std::numbers::pi * fx * u + px) *
                                 std::cos(2 * std::numbers::pi * fy * v + py) +
                      tilt * (v - 0.5);
        const Scalar dx = static_cast<Scalar>(x) + 0.5 - cx, dy = static_cast<Scalar>(y) + 0.5 - cy;
        const Scalar ex = (dx * c + dy * s) / a, ey = (-dx * s + dy * c) / b;
        if (ex * ex + ey * ey <= 1.0) base *= o.contrast;
        const Scalar value = std::clamp(base * speckle(rng), 0.0, 1.0);
        img.pixels[static_cast<std::size_t>(y * o.size + x)] = static_cast<std::uint8_t>(std::lround(value * 255.0));
      }
    }

    std::ostringstream name;
    name << "img_" << std::setw(5) << std::setfill('0') << n << ".pgm";
    write_pgm(out_dir / name.str(), img);
    samples.push_back({name.str(), BBox{cx / size, cy / size, 2 * half_w / size, 2 * half_h / size}, 1});
  }
  write_manifest(out_dir / "manifest.jsonl", samples);
  return samples;
}

}  // namespace lqa
