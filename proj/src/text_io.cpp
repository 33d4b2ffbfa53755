#include "cvae/text_io.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "cvae/errors.hpp"

namespace cvae {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 64> buffer{};
  const auto result = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  return std::string(buffer.data(), result.ptr);
}

double parse_double(std::string_view text) {
  const std::string token = trim(text);
  if (token == "nan") return std::nan("");
  if (token == "inf") return INFINITY;
  if (token == "-inf") return -INFINITY;
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (!token.empty() && *begin == '+') ++begin;
  const auto result = std::from_chars(begin, end, value);
  if (token.empty() || result.ec != std::errc() || result.ptr != end) {
    throw InputError("not a number: '" + token + "'");
  }
  return value;
}

long long parse_integer(std::string_view text) {
  const std::string token = trim(text);
  long long value = 0;
  const char* end = token.data() + token.size();
  const auto result = std::from_chars(token.data(), end, value);
  if (token.empty() || result.ec != std::errc() || result.ptr != end) {
    throw InputError("not an integer: '" + token + "'");
  }
  return value;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  std::array<char, 17> buffer{};
  const auto result = std::to_chars(buffer.data(), buffer.data() + 16, value, 16);
  std::string digits(buffer.data(), result.ptr);
  return std::string(16 - digits.size(), '0') + digits;
}

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view text, char delimiter) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(delimiter, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace cvae
