#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace iclopt {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`, creating parent
/// directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace iclopt
