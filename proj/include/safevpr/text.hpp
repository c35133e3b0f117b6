#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace safevpr::text {

// Shortest representation that parses back to the same double.
std::string format_double(double v);

// Whole-field strict parses: no leading/trailing junk, no thousands separators.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char delim);

}  // namespace safevpr::text
