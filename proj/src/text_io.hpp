#pragma once

// Locale-independent number formatting/parsing and a minimal CSV reader for
// the numeric mirrors of the binary formats.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace dynaprune::detail {

/// Shortest representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);
std::uint64_t parse_u64(std::string_view text);

/// Reads a comma-separated file whose first row must equal `header`. Returns
/// data rows only; every row must have header.size() fields.
std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               std::initializer_list<std::string_view> header);

std::vector<std::string> split(std::string_view line, char sep);

}  // namespace dynaprune::detail
