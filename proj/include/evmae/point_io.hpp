#pragma once

#include <cstdio>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evmae/event_io.hpp"
#include "evmae/patch.hpp"
#include "evmae/sampler.hpp"
#include "evmae/trainer.hpp"

namespace evmae {

namespace detail {

/// Shortest decimal that round-trips the exact double.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
}

inline double parse_double_field(std::string_view field, std::size_t line_no) {
    const std::string s(field);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require(end == s.c_str() + s.size() && !s.empty(), errc::malformed_line,
            "bad numeric field '" + s + "' on line " + std::to_string(line_no));
    return v;
}

/// Iterates non-empty lines, tolerating a trailing newline and CR endings.
template <typename Fn>
inline void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (!line.empty()) fn(line, line_no);
        pos = nl + 1;
    }
}

}  // namespace detail

// --- normalized point sets ---------------------------------------------------

/// One normalized point per line under an x,y,t,p header. Doubles are printed
/// with enough digits to round-trip exactly, so write/parse is an identity.
inline std::string write_point_csv(const PointSet& ps) {
    std::string out = "x,y,t,p\n";
    for (std::size_t i = 0; i < ps.size(); ++i) {
        out += detail::fmt_double(ps.x(i));
        out += ',';
        out += detail::fmt_double(ps.y(i));
        out += ',';
        out += detail::fmt_double(ps.t(i));
        out += ',';
        out += char('0' + ps.polarity[i]);
        out += '\n';
    }
    return out;
}

inline PointSet parse_point_csv(std::string_view text) {
    PointSet ps;
    bool saw_header = false;
    detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (!saw_header) {
            require(line == "x,y,t,p", errc::malformed_line, "expected header x,y,t,p");
            saw_header = true;
            return;
        }
        const auto f = detail::split_csv_line(line);
        require(f.size() == 4, errc::malformed_line,
                "expected 4 fields on line " + std::to_string(line_no));
        ps.xyz.push_back(detail::parse_double_field(f[0], line_no));
        ps.xyz.push_back(detail::parse_double_field(f[1], line_no));
        ps.xyz.push_back(detail::parse_double_field(f[2], line_no));
        require(f[3] == "0" || f[3] == "1", errc::invalid_polarity,
                "polarity must be 0 or 1 on line " + std::to_string(line_no));
        ps.polarity.push_back(f[3] == "1" ? 1 : 0);
        ps.source_index.push_back(ps.polarity.size() - 1);
    });
    require(saw_header, errc::malformed_line, "missing x,y,t,p header");
    return ps;
}

// --- patches -------------------------------------------------------------

/// One member point per line, grouped by patch. Coordinates are global
/// (centre minus the stored local offset); residual repeats the patch's
/// mean absolute plane-fit error on every member row.
inline std::string write_patch_csv(const PatchSet& set, const PointSet& ps) {
    std::string out = "patch_id,is_center,x,y,t,p,residual\n";
    for (std::size_t pi = 0; pi < set.size(); ++pi) {
        const Patch& patch = set.patches[pi];
        const std::string residual = detail::fmt_double(patch.residual);
        for (std::size_t j = 0; j < patch.k(); ++j) {
            out += std::to_string(pi);
            out += ',';
            out += patch.point_index[j] == patch.center_index ? '1' : '0';
            out += ',';
            out += detail::fmt_double(patch.center[0] - patch.local_xyz[3 * j]);
            out += ',';
            out += detail::fmt_double(patch.center[1] - patch.local_xyz[3 * j + 1]);
            out += ',';
            out += detail::fmt_double(patch.center[2] - patch.local_xyz[3 * j + 2]);
            out += ',';
            out += char('0' + ps.polarity[patch.point_index[j]]);
            out += ',';
            out += residual;
            out += '\n';
        }
    }
    return out;
}

// --- labels ------------------------------------------------------------------

inline std::string write_labels_csv(const std::vector<std::pair<std::string, std::size_t>>& rows) {
    std::string out = "file,label\n";
    for (const auto& [file, label] : rows) {
        out += file;
        out += ',';
        out += std::to_string(label);
        out += '\n';
    }
    return out;
}

inline std::vector<std::pair<std::string, std::size_t>> parse_labels_csv(std::string_view text) {
    std::vector<std::pair<std::string, std::size_t>> rows;
    bool saw_header = false;
    detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (!saw_header) {
            require(line == "file,label", errc::malformed_line, "expected header file,label");
            saw_header = true;
            return;
        }
        const auto f = detail::split_csv_line(line);
        require(f.size() == 2 && !f[0].empty(), errc::malformed_line,
                "expected file,label on line " + std::to_string(line_no));
        const double v = detail::parse_double_field(f[1], line_no);
        require(v >= 0 && v == static_cast<double>(static_cast<std::size_t>(v)),
                errc::malformed_line, "label must be a non-negative integer");
        rows.emplace_back(std::string(f[0]), static_cast<std::size_t>(v));
    });
    require(saw_header, errc::malformed_line, "missing file,label header");
    return rows;
}

// --- metrics -------------------------------------------------------------

/// step,loss,acc per row; the acc field is left empty when not tracked.
inline std::string write_metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "step,loss,acc\n";
    for (const MetricsRow& r : rows) {
        out += std::to_string(r.step);
        out += ',';
        out += detail::fmt_double(r.loss);
        out += ',';
        if (r.acc) out += detail::fmt_double(*r.acc);
        out += '\n';
    }
    return out;
}

// --- PLY -----------------------------------------------------------------

/// ASCII PLY of bare xyz vertices for external plotting tools.
inline std::string write_ply(std::span<const double> xyz) {
    const std::size_t n = xyz.size() / 3;
    require(xyz.size() == 3 * n, errc::shape_mismatch, "xyz length must be a multiple of 3");
    std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(n) +
                      "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (std::size_t i = 0; i < n; ++i) {
        out += detail::fmt_double(xyz[3 * i]);
        out += ' ';
        out += detail::fmt_double(xyz[3 * i + 1]);
        out += ' ';
        out += detail::fmt_double(xyz[3 * i + 2]);
        out += '\n';
    }
    return out;
}

}  // namespace evmae
