#pragma once

#include "lqa/boxes.hpp"
#include "lqa/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace lqa {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit grayscale raster.
struct GrayImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

GrayImage read_pgm(const std::filesystem::path& path);
/// Binary P5 with maxval 255; written to a temporary file and renamed.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// [1 x H x W] tensor with intensities min-max normalized to [0, 1].
Tensor image_tensor(const GrayImage& image);

/// One manifest line: {"image": path relative to the manifest, "box": [cx, cy, w, h], "label": 0|1}.
struct Sample {
  std::string image;
  BBox box;
  int label = 1;
};

std::vector<Sample> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<Sample>& samples);

struct LoadedSample {
  Tensor image;
  BBox box;
  int label = 1;
};

/// Parses the manifest and every referenced image; all images must be
/// `expected_size` square when it is positive.
std::vector<LoadedSample> load_dataset(const std::filesystem::path& manifest, Index expected_size = 0);

struct SynthOptions {
  Index count = 1;
  std::uint64_t seed = 0;
  Index size = 64;
  /// Intensity multiplier inside the lesion; lower is darker.
  Scalar contrast = 0.4;
  /// Equivalent number of looks of the gamma speckle; lower is noisier.
  Scalar looks = 4;
  /// Upper bound on lesion area as a fraction of the image.
  Scalar max_area = 0.15;
};

/// Speckled smooth background with one darker rotated ellipse per image.
/// Writes img_NNNNN.pgm files plus manifest.jsonl into `out_dir` and returns
/// the samples. Output is byte-identical for equal options.
std::vector<Sample> gen_synthetic(const SynthOptions& options, const std::filesystem::path& out_dir);

/// Whole-file atomic write.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace lqa
