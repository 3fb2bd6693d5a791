#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dcmon::detail {

/// Writes `<path>.tmp`, optionally fsyncs it, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes, bool sync);

std::string read_file(const std::filesystem::path& path);

}  // namespace dcmon::detail
