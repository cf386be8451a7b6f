#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protoicl/metrics.hpp"
#include "protoicl/trainer.hpp"

namespace protoicl {

inline constexpr char kCheckpointMagic[4] = {'P', 'I', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A checkpoint is "PICK", u32 version, u32 section count, then named
/// sections: u32 name length, name, u8 kind, u64 element count, payload
/// (f64 / i64 little endian, or raw text bytes).
struct CheckpointSection {
  enum class Kind : std::uint8_t { F64 = 0, I64 = 1, Text = 2 };
  std::string name;
  Kind kind = Kind::F64;
  std::uint64_t count = 0;
};

struct LoadedCheckpoint {
  LearnerState state;
  RunMetrics metrics;
  std::string fingerprint;
};

void save_checkpoint(const LearnerState& state, const RunMetrics& metrics, const std::string& fingerprint,
                     const std::filesystem::path& path);

/// Throws InputError on a bad magic, a version mismatch, truncation or a
/// missing section.
[[nodiscard]] LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Section table without decoding payloads.
[[nodiscard]] std::vector<CheckpointSection> checkpoint_manifest(const std::filesystem::path& path);

}  // namespace protoicl
