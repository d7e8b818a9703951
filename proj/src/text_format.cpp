#include "pgdlr/text_format.hpp"

#include "pgdlr/types.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace pgdlr {

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view token) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r'))
    token.remove_suffix(1);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw ConfigError("cannot parse number '" + std::string(token) + "'");
  return value;
}

}  // namespace pgdlr
