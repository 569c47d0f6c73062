#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace tomotr {

/// Shortest decimal form that round-trips a double ("%.17g" fallback via
/// precision search). Keeps CSV and triplet files byte-stable.
std::string format_double(double value);

/// Opens for writing, creating parent directories; throws on failure.
std::ofstream open_output(const std::filesystem::path& path);

/// Opens for reading; throws on failure.
std::ifstream open_input(const std::filesystem::path& path);

}  // namespace tomotr
