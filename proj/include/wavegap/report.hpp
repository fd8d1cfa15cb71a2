#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wavegap/errors.hpp"

namespace wavegap {

using Json = nlohmann::ordered_json;

constexpr int report_schema_version = 1;

namespace detail {

inline std::string format_double(double v)
{
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline void dump(const Json& j, std::string& out, int indent)
{
    const std::string pad(indent + 2, ' '), close(indent, ' ');
    switch (j.type()) {
    case Json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) out += ",\n";
            first = false;
            out += pad + Json(it.key()).dump() + ": ";
            dump(it.value(), out, indent + 2);
        }
        out += "\n" + close + "}";
        return;
    }
    case Json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        bool scalar = true;
        for (const auto& e : j) scalar = scalar && !e.is_structured();
        if (scalar) {
            out += "[";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ", ";
                dump(j[i], out, indent);
            }
            out += "]";
            return;
        }
        out += "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) out += ",\n";
            out += pad;
            dump(j[i], out, indent + 2);
        }
        out += "\n" + close + "]";
        return;
    }
    case Json::value_t::number_float: out += format_double(j.get<double>()); return;
    default: out += j.dump();
    }
}

} // namespace detail

/// Pretty JSON with every double written to 17 significant digits; non-finite values become null.
inline std::string to_json_text(const Json& j)
{
    std::string out;
    detail::dump(j, out, 0);
    out += "\n";
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, to_json_text(j)); }

/// Plot-ready CSV with a header row; all columns must have equal length.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<Eigen::VectorXd>& columns)
{
    if (header.size() != columns.size()) throw ShapeError("csv header does not match the column count");
    const Eigen::Index n = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns)
        if (c.size() != n) throw ShapeError("csv columns differ in length");
    std::string text;
    for (std::size_t k = 0; k < header.size(); ++k) text += (k ? "," : "") + header[k];
    text += "\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (k) text += ",";
            double v = columns[k][i];
            text += std::isfinite(v) ? detail::format_double(v) : "nan";
        }
        text += "\n";
    }
    write_text(path, text);
}

} // namespace wavegap
