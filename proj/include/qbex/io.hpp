#pragma once

// File formats shared by every stage of the pipeline.
//
// QXF matrix: 4 magic bytes "QXF1", rows (u32 LE), cols (u32 LE), then
// rows*cols IEEE-754 doubles (LE), row-major. Values must be finite.
//
// Metadata sidecar "<path>.meta": one key=value per line, keys sorted.
// Row-id sidecar "<path>.ids": one id per line, in row order.

#include "qbex/common.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace qbex::io {

namespace fs = std::filesystem;

using Metadata = std::map<std::string, std::string>;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
    std::uint64_t v = 0;
    for (int b = bytes - 1; b >= 0; --b) v = (v << 8) | p[b];
    return v;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require_data(static_cast<bool>(in), "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require_data(static_cast<bool>(out), "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require_data(static_cast<bool>(out), "short write to " + path.string());
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::string encode_qxf(const MatrixXd& m) {
    require_data(m.rows() <= 0xFFFFFFFFLL && m.cols() <= 0xFFFFFFFFLL, "matrix too large for QXF");
    require_data(m.allFinite(), "QXF payload must be finite");
    std::string out;
    out.reserve(12 + static_cast<std::size_t>(m.size()) * 8);
    out.append("QXF1", 4);
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put_u64(out, std::bit_cast<std::uint64_t>(m(r, c)));
    return out;
}

inline MatrixXd decode_qxf(const std::string& bytes, const std::string& what = "QXF data") {
    require_data(bytes.size() >= 12 && std::memcmp(bytes.data(), "QXF1", 4) == 0, what + ": bad QXF magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const auto rows = static_cast<std::uint64_t>(detail::get_le(p + 4, 4));
    const auto cols = static_cast<std::uint64_t>(detail::get_le(p + 8, 4));
    require_data(bytes.size() - 12 == rows * cols * 8, what + ": QXF payload length mismatch");
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const unsigned char* q = p + 12;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c, q += 8) m(r, c) = std::bit_cast<double>(detail::get_le(q, 8));
    require_data(m.allFinite(), what + ": non-finite value in QXF payload");
    return m;
}

inline void write_qxf(const fs::path& path, const MatrixXd& m) { detail::write_file(path, encode_qxf(m)); }

inline MatrixXd read_qxf(const fs::path& path) { return decode_qxf(detail::read_file(path), path.string()); }

inline fs::path sidecar(const fs::path& path, const std::string& ext) {
    return fs::path(path.string() + ext);
}

inline void write_metadata(const fs::path& path, const Metadata& meta) {
    std::string out;
    for (const auto& [k, v] : meta) out += k + "=" + v + "\n";
    detail::write_file(sidecar(path, ".meta"), out);
}

inline Metadata read_metadata(const fs::path& path) {
    Metadata meta;
    std::istringstream in(detail::read_file(sidecar(path, ".meta")));
    std::string line;
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        require_data(eq != std::string::npos, "malformed metadata line: " + line);
        meta[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return meta;
}

inline void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) out += id + "\n";
    detail::write_file(sidecar(path, ".ids"), out);
}

inline std::vector<std::string> read_ids(const fs::path& path) {
    std::vector<std::string> ids;
    std::istringstream in(detail::read_file(sidecar(path, ".ids")));
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

/// Read a tab-separated file. Blank lines and lines starting with '#' are
/// skipped; every remaining row must have exactly `columns` fields.
inline std::vector<std::vector<std::string>> read_tsv(const fs::path& path, std::size_t columns) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(detail::read_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        require_data(fields.size() == columns, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                                   std::to_string(columns) + " tab-separated fields");
        rows.push_back(std::move(fields));
    }
    return rows;
}

inline void write_text(const fs::path& path, const std::string& text) { detail::write_file(path, text); }

inline std::string read_text(const fs::path& path) { return detail::read_file(path); }

/// Round-trippable decimal form of a double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace qbex::io
