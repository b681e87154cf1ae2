// csv.hpp
// Deterministic text formatting for CSV exports: fixed 9-significant-digit
// rendering so identical runs emit byte-identical files.
#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace bloatline {

inline std::string g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// round-trip-exact rendering, for feeding values back through the config layer
inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << body;
}

}  // namespace bloatline
