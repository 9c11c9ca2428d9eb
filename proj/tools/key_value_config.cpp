#include "key_value_config.hpp"

#include <fstream>
#include <stdexcept>

namespace framepred::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in, const std::string& source) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(source + ":" + std::to_string(n) + ": expected `key = value`");
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(source + ":" + std::to_string(n) + ": empty key");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> read_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config file '" + path + "'");
    return parse_key_values(in, path);
}

}  // namespace framepred::cli
