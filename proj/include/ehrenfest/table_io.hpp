#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ehrenfest/grid.hpp"
#include "ehrenfest/kernel.hpp"

namespace ehrenfest {

// Columnar text tables, whitespace separated, 1-based indices:
//   kernel:  header "i j lambda", one row per (i, j), all N^2 rows present
//   profile: header "i phi",      one row per urn
// Values are written in shortest round-trip form, so a load/write cycle
// reproduces the numbers exactly.

RateKernel read_kernel_table(std::istream& in);
RateKernel read_kernel_table(const std::filesystem::path& path);
void write_kernel_table(std::ostream& out, const RateKernel& kernel);
void write_kernel_table(const std::filesystem::path& path, const RateKernel& kernel);

InitialProfile read_profile_table(std::istream& in);
InitialProfile read_profile_table(const std::filesystem::path& path);
void write_profile_table(std::ostream& out, const InitialProfile& profile);
void write_profile_table(const std::filesystem::path& path, const InitialProfile& profile);

// Shortest decimal string that parses back to the same double.
std::string format_roundtrip(double v);
// 15 significant digits, the CSV export precision.
std::string format_csv(double v);

}  // namespace ehrenfest
