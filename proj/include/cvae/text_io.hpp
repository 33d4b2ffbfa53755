#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cvae {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

// Strict parse of a whole token; throws InputError on trailing garbage.
double parse_double(std::string_view text);
long long parse_integer(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char delimiter);

}  // namespace cvae
