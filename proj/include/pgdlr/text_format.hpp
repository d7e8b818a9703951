#pragma once

#include <string>
#include <string_view>

namespace pgdlr {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);
/// Strict parse of a full token; throws ConfigError on garbage.
double parse_double(std::string_view token);

}  // namespace pgdlr
