#include "querynet/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace querynet::models {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'Q', 'N', 'C', 'K'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw CheckpointError("checkpoint: " + path.string() + " is truncated");
  }
  return value;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.meta.size()));
  for (std::int32_t m : checkpoint.meta) put<std::int32_t>(out, m);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const numgrad::Tensor& t : checkpoint.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("checkpoint: write to " + path.string() + " failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint cp;
  cp.kind = static_cast<CheckpointKind>(get<std::uint32_t>(in, path));
  const auto meta_count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < meta_count; ++i) cp.meta.push_back(get<std::int32_t>(in, path));
  const auto tensor_count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw CheckpointError("checkpoint: implausible tensor rank " + std::to_string(rank));
    numgrad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint32_t>(in, path));
    std::vector<float> values(numgrad::shape_size(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)))) {
      throw CheckpointError("checkpoint: " + path.string() + " is truncated");
    }
    cp.tensors.emplace_back(std::move(shape), std::move(values));
  }
  return cp;
}

void save_victim(const std::filesystem::path& path, const VictimModel& model) {
  const VictimArch& a = model.arch();
  write_checkpoint(path, Checkpoint{CheckpointKind::kVictim,
                                    {static_cast<std::int32_t>(a.channels), static_cast<std::int32_t>(a.height),
                                     static_cast<std::int32_t>(a.width), a.classes, static_cast<std::int32_t>(a.conv1),
                                     static_cast<std::int32_t>(a.conv2)},
                                    model.params()});
}

VictimModel load_victim(const std::filesystem::path& path) {
  Checkpoint cp = read_checkpoint(path);
  if (cp.kind != CheckpointKind::kVictim || cp.meta.size() != 6) {
    throw CheckpointError("checkpoint: " + path.string() + " does not hold a victim model");
  }
  VictimArch a;
  a.channels = static_cast<std::size_t>(cp.meta[0]);
  a.height = static_cast<std::size_t>(cp.meta[1]);
  a.width = static_cast<std::size_t>(cp.meta[2]);
  a.classes = cp.meta[3];
  a.conv1 = static_cast<std::size_t>(cp.meta[4]);
  a.conv2 = static_cast<std::size_t>(cp.meta[5]);
  return VictimModel(a, std::move(cp.tensors));
}

void save_surrogate(const std::filesystem::path& path, const Surrogate& model) {
  const SurrogateArch& a = model.arch();
  Checkpoint cp{CheckpointKind::kSurrogate,
                {static_cast<std::int32_t>(a.channels), static_cast<std::int32_t>(a.height),
                 static_cast<std::int32_t>(a.width), a.classes, a.layers},
                model.weights()};
  cp.tensors.insert(cp.tensors.end(), model.alphas().begin(), model.alphas().end());
  write_checkpoint(path, cp);
}

Surrogate load_surrogate(const std::filesystem::path& path) {
  Checkpoint cp = read_checkpoint(path);
  if (cp.kind != CheckpointKind::kSurrogate || cp.meta.size() != 5) {
    throw CheckpointError("checkpoint: " + path.string() + " does not hold a surrogate");
  }
  SurrogateArch a;
  a.channels = static_cast<std::size_t>(cp.meta[0]);
  a.height = static_cast<std::size_t>(cp.meta[1]);
  a.width = static_cast<std::size_t>(cp.meta[2]);
  a.classes = cp.meta[3];
  a.layers = cp.meta[4];
  if (a.layers < 1 || cp.tensors.size() < static_cast<std::size_t>(a.layers)) {
    throw CheckpointError("checkpoint: surrogate tensor count does not match its layer count");
  }
  std::vector<numgrad::Tensor> alphas(cp.tensors.end() - a.layers, cp.tensors.end());
  cp.tensors.resize(cp.tensors.size() - static_cast<std::size_t>(a.layers));
  return Surrogate(a, std::move(cp.tensors), std::move(alphas));
}

}  // namespace querynet::models
