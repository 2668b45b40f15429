#pragma once

#include "saop/common.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

namespace saop::io {

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) {
        throw std::runtime_error("format_double: conversion failed");
    }
    return std::string(buf.data(), end);
}

inline void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i != 0) out << ',';
        out << cells[i];
    }
    out << '\n';
}

inline std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    return out;
}

}  // namespace saop::io
