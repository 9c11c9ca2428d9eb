#pragma once

// `key = value` lines; '#' starts a comment, blank lines are skipped.

#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace framepred::cli {

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in, const std::string& source);
std::vector<std::pair<std::string, std::string>> read_key_value_file(const std::string& path);

}  // namespace framepred::cli
