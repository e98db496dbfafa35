#pragma once

#include <filesystem>
#include <span>
#include <string>

namespace innlat {

/// Decimal with 17 significant digits ("%.17g"); round-trips every finite double.
std::string format_real(double x);

/// "[a,b,c]" with format_real entries.
std::string format_reals(std::span<const double> xs);

/// Write via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace innlat
