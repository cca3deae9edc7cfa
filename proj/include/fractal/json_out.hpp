#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "fractal/report.hpp"

namespace fractal {

inline std::string fmt17(double x) {
    if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline void write_json(std::string& out, const ojson& j, int indent, int depth) {
    auto pad = [&](int d) { out += '\n' + std::string(static_cast<size_t>(indent * d), ' '); };
    switch (j.type()) {
        case ojson::value_t::object: {
            if (j.empty()) { out += "{}"; return; }
            out += '{';
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                pad(depth + 1);
                out += ojson(it.key()).dump() + ": ";
                write_json(out, it.value(), indent, depth + 1);
            }
            pad(depth);
            out += '}';
            return;
        }
        case ojson::value_t::array: {
            if (j.empty()) { out += "[]"; return; }
            bool scalars = std::all_of(j.begin(), j.end(), [](const ojson& e) { return e.is_primitive(); });
            out += '[';
            bool first = true;
            for (auto& e : j) {
                if (!first) out += scalars ? ", " : ",";
                first = false;
                if (!scalars) pad(depth + 1);
                write_json(out, e, indent, depth + 1);
            }
            if (!scalars) pad(depth);
            out += ']';
            return;
        }
        case ojson::value_t::number_float: {
            double x = j.get<double>();
            out += std::isfinite(x) ? fmt17(x) : "null";
            return;
        }
        default:
            out += j.dump();
    }
}

}  // namespace detail

// Deterministic JSON text: insertion-ordered keys, floats with 17 significant digits.
inline std::string dump_json(const ojson& j, int indent = 2) {
    std::string out;
    detail::write_json(out, j, indent, 0);
    out += '\n';
    return out;
}

// Writes through a temporary file and renames, so readers never see partial output.
inline void write_file_atomic(const std::string& path, const std::string& text) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream o(tmp, std::ios::binary);
        if (!o) throw std::runtime_error("cannot write '" + path + "'");
        o << text;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename onto '" + path + "'");
}

}  // namespace fractal
