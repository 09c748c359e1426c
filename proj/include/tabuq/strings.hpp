#pragma once

#include <string>
#include <vector>

namespace tabuq {

// Shortest decimal representation that round-trips to the same double.
// Emits "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double v);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace tabuq
