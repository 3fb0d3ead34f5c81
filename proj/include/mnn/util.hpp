#pragma once

#include <string>
#include <vector>

namespace mnn {

/// Shortest text that parses back to the identical double ("nan" for NaN).
std::string format_double(double v);
double parse_double(const std::string& s);

std::vector<std::string> split(const std::string& s, char sep);

}  // namespace mnn
