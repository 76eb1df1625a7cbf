#pragma once

#include <cstdint>
#include <filesystem>

#include "querynet/data/image_batch.hpp"

namespace querynet::data {

/// Parameters of the procedural glyph dataset.
struct SynthSpec {
  std::uint64_t seed = 0;
  int classes = 3;
  int per_class = 100;
  int size = 16;
  /// Std-dev of the additive pixel noise.
  float noise = 0.05f;
  /// Mean peak brightness of a blob above the background.
  float contrast = 0.45f;
  float background = 0.2f;
};

/// Hermetic image-classification set: every class is a fixed pair of
/// Gaussian blobs; samples jitter position, width and brightness and carry
/// additive noise. Output is 8-bit quantized and balanced, shuffled by seed.
LabeledSet synth_dataset(const SynthSpec& spec);

// IDX loading errors. Each failure mode has its own type.
class IdxFileNotFound : public DataError {
 public:
  using DataError::DataError;
};
class BadMagic : public DataError {
 public:
  using DataError::DataError;
};
class TruncatedFile : public DataError {
 public:
  using DataError::DataError;
};
class CountMismatch : public DataError {
 public:
  using DataError::DataError;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled by 1/255; at most `limit` samples are kept when nonzero.
LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                    std::size_t limit = 0);

}  // namespace querynet::data
