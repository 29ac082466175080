#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "epu/corpus.hpp"
#include "epu/date.hpp"

namespace testing_support {

inline epu::Document doc(std::string id, std::string outlet, std::string date, std::string body,
                         std::optional<bool> gold = std::nullopt) {
    epu::Document d;
    d.id = std::move(id);
    d.outlet = std::move(outlet);
    d.date = epu::parse_date_or_throw(date);
    d.body = std::move(body);
    d.gold_epu = gold;
    return d;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("epu-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace testing_support
