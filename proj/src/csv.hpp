#pragma once

#include <string>
#include <vector>

namespace romx {

// Minimal RFC-4180 style field splitting; embedded newlines unsupported.
std::vector<std::string> split_csv_line(const std::string& line);

std::string csv_escape(const std::string& field);

// Shortest round-trip decimal form, locale independent.
std::string fmt_double(double v);

}  // namespace romx
