#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "querynet/models/surrogate.hpp"
#include "querynet/models/victim.hpp"

namespace querynet::models {

// Layout (all integers little-endian u32, values little-endian f32):
//   "QNCK" | version | kind | meta_count | meta[meta_count] (i32)
//   | tensor_count | { rank | dims[rank] | values[prod(dims)] }*
// See docs/checkpoint_format.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { kVictim = 1, kSurrogate = 2 };

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kVictim;
  std::vector<std::int32_t> meta;
  std::vector<numgrad::Tensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_victim(const std::filesystem::path& path, const VictimModel& model);
VictimModel load_victim(const std::filesystem::path& path);

void save_surrogate(const std::filesystem::path& path, const Surrogate& model);
Surrogate load_surrogate(const std::filesystem::path& path);

}  // namespace querynet::models
