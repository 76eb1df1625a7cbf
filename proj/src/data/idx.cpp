#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>

#include "querynet/data/datasets.hpp"

namespace querynet::data {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxFileNotFound("idx: cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw TruncatedFile("idx: header of " + path.string() + " is truncated");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                    std::size_t limit) {
  const auto image_bytes = read_file(images_path);
  const auto label_bytes = read_file(labels_path);

  const std::uint32_t image_magic = read_be32(image_bytes, 0, images_path);
  if (image_magic != kImageMagic) {
    throw BadMagic("idx: " + images_path.string() + " has magic " + std::to_string(image_magic) +
                   ", expected 2051");
  }
  const std::uint32_t label_magic = read_be32(label_bytes, 0, labels_path);
  if (label_magic != kLabelMagic) {
    throw BadMagic("idx: " + labels_path.string() + " has magic " + std::to_string(label_magic) +
                   ", expected 2049");
  }

  const std::size_t count = read_be32(image_bytes, 4, images_path);
  const std::size_t rows = read_be32(image_bytes, 8, images_path);
  const std::size_t cols = read_be32(image_bytes, 12, images_path);
  const std::size_t label_count = read_be32(label_bytes, 4, labels_path);
  if (count != label_count) {
    throw CountMismatch("idx: " + std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = rows * cols;
  if (image_bytes.size() < 16 + count * pixels) {
    throw TruncatedFile("idx: " + images_path.string() + " holds fewer than " + std::to_string(count) + " images");
  }
  if (label_bytes.size() < 8 + count) {
    throw TruncatedFile("idx: " + labels_path.string() + " holds fewer than " + std::to_string(count) + " labels");
  }

  const std::size_t keep = limit == 0 ? count : std::min(limit, count);
  std::vector<float> values(keep * pixels);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(image_bytes[16 + i]) / 255.0f;

  LabeledSet set;
  set.labels.resize(keep);
  int max_label = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    set.labels[i] = label_bytes[8 + i];
    max_label = std::max(max_label, set.labels[i]);
  }
  set.classes = std::max(2, max_label + 1);
  set.images = ImageBatch::from_values(keep, 1, rows, cols, std::move(values), true);
  return set;
}

}  // namespace querynet::data
