#pragma once

#include <filesystem>
#include <string_view>

namespace protoicl {

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// reader never sees a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

[[nodiscard]] std::string read_file(const std::filesystem::path& path);

}  // namespace protoicl
