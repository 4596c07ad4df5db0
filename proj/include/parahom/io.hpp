#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "parahom/grid.hpp"

namespace phom {

// compact binary dump: 32-byte header (magic "PHOM", version, n, axis count,
// up to four axis sizes) followed by row-major little-endian doubles
void write_phom_dump(const std::filesystem::path& path, int n, const std::vector<int>& axes,
                     const std::vector<double>& data);
std::pair<std::vector<int>, std::vector<double>> read_phom_dump(const std::filesystem::path& path);

// trajectory snapshot as CSV with node coordinates and value
void write_field_csv(const std::filesystem::path& path, const SlowGrid& grid, const Field& f);

std::string format_double(double v);  // fixed %.17g formatting for reports

uint64_t fnv1a_file(const std::filesystem::path& path);

}  // namespace phom
