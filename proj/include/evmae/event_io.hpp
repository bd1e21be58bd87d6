#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>

#include "evmae/events.hpp"

namespace evmae {

namespace detail {

inline std::uint16_t read_u16le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint64_t read_u64le(const unsigned char* p) {
    return static_cast<std::uint64_t>(read_u32le(p)) |
           (static_cast<std::uint64_t>(read_u32le(p + 4)) << 32);
}
inline std::int32_t read_i32le(const unsigned char* p) {
    return static_cast<std::int32_t>(read_u32le(p));
}
inline std::int16_t read_i16le(const unsigned char* p) {
    return static_cast<std::int16_t>(read_u16le(p));
}

inline void append_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void append_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void append_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

/// parse a full line of comma separated non-negative integers; returns false
/// on any malformed field
inline bool parse_uint_fields(std::string_view line, std::uint64_t* out, int n) {
    std::size_t pos = 0;
    for (int f = 0; f < n; ++f) {
        std::size_t end = (f + 1 == n) ? line.size() : line.find(',', pos);
        if (end == std::string_view::npos) return false;
        if (end == pos) return false;
        std::uint64_t v = 0;
        for (std::size_t i = pos; i < end; ++i) {
            char c = line[i];
            if (c < '0' || c > '9') return false;
            v = v * 10 + static_cast<std::uint64_t>(c - '0');
        }
        out[f] = v;
        pos = end + 1;
    }
    return true;
}

}  // namespace detail

// --- CSV ------------------------------------------------------------------

/// Parse `x,y,t,p` CSV text into a stream. Events keep file order and are
/// then stably sorted by timestamp.
inline EventStream parse_csv_events(std::string_view text, std::uint32_t width, std::uint32_t height) {
    EventStream s{{}, width, height};
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = (nl == std::string_view::npos) ? text.substr(pos)
                                                               : text.substr(pos, nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (!saw_header) {
            require(line == "x,y,t,p", errc::malformed_line, "expected header 'x,y,t,p'");
            saw_header = true;
            continue;
        }
        if (line.empty()) {
            // blank trailing line is fine; a blank line mid-file is not
            if (pos <= text.size() && text.find_first_not_of("\r\n", pos) != std::string_view::npos)
                raise(errc::malformed_line, "blank line " + std::to_string(line_no));
            continue;
        }
        std::uint64_t f[4];
        require(detail::parse_uint_fields(line, f, 4), errc::malformed_line,
                "line " + std::to_string(line_no) + ": expected 4 integer fields");
        require(f[3] <= 1, errc::invalid_polarity,
                "line " + std::to_string(line_no) + ": polarity " + std::to_string(f[3]));
        require(f[0] < width && f[1] < height, errc::out_of_bounds,
                "line " + std::to_string(line_no) + ": pixel (" + std::to_string(f[0]) + "," +
                    std::to_string(f[1]) + ")");
        s.events.push_back(Event{static_cast<std::uint16_t>(f[0]), static_cast<std::uint16_t>(f[1]),
                                 f[2], static_cast<std::uint8_t>(f[3])});
    }
    require(saw_header, errc::malformed_line, "empty input, expected header 'x,y,t,p'");
    s.sort_by_time();
    return s;
}

// --- EVB1 binary ------------------------------------------------------------
//
// magic "EVB1" | u32 width | u32 height | u64 count |
// count records of 16 bytes: u16 x | u16 y | u8 p | 3 zero bytes | u64 t
// All little-endian. Records sorted by t.

inline constexpr std::size_t evb1_header_size = 4 + 4 + 4 + 8;
inline constexpr std::size_t evb1_record_size = 16;

inline EventStream parse_binary_events(std::string_view bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    require(bytes.size() >= evb1_header_size, errc::truncated, "EVB1 header incomplete");
    require(bytes.substr(0, 4) == "EVB1", errc::bad_magic, "not an EVB1 file");
    const std::uint32_t width = detail::read_u32le(p + 4);
    const std::uint32_t height = detail::read_u32le(p + 8);
    const std::uint64_t count = detail::read_u64le(p + 12);
    require(count <= (bytes.size() - evb1_header_size) / evb1_record_size, errc::truncated,
            "EVB1 promises " + std::to_string(count) + " records");
    EventStream s{{}, width, height};
    s.events.reserve(count);
    const unsigned char* r = p + evb1_header_size;
    for (std::uint64_t i = 0; i < count; ++i, r += evb1_record_size) {
        Event e;
        e.x = detail::read_u16le(r);
        e.y = detail::read_u16le(r + 2);
        e.p = r[4];
        e.t = detail::read_u64le(r + 8);
        require(e.p <= 1, errc::invalid_polarity,
                "record " + std::to_string(i) + ": polarity " + std::to_string(int(e.p)));
        require(e.x < width && e.y < height, errc::out_of_bounds,
                "record " + std::to_string(i) + " outside sensor");
        s.events.push_back(e);
    }
    s.sort_by_time();
    return s;
}

inline std::string write_binary_events(const EventStream& s) {
    std::string out;
    out.reserve(evb1_header_size + s.size() * evb1_record_size);
    out += "EVB1";
    detail::append_u32le(out, s.width);
    detail::append_u32le(out, s.height);
    detail::append_u64le(out, s.size());
    for (const Event& e : s.events) {
        detail::append_u16le(out, e.x);
        detail::append_u16le(out, e.y);
        out.push_back(static_cast<char>(e.p));
        out.append(3, '\0');
        detail::append_u64le(out, e.t);
    }
    return out;
}

// --- AEDAT 3.1 ---------------------------------------------------------------
//
// Optional '#'-prefixed ASCII header lines, then packets. Packet header
// (28 bytes, little-endian):
//   i16 eventType | i16 eventSource | i32 eventSize | i32 eventTSOffset |
//   i32 eventTSOverflow | i32 eventCapacity | i32 eventNumber | i32 eventValid
// Polarity packets have eventType=1, eventSize=8; each event is two u32 words:
//   word0: bit0 validity, bit1 polarity, bits 2-16 y, bits 17-31 x
//   word1: timestamp in microseconds
// Other packet types are skipped by eventSize*eventNumber bytes. The 31-bit
// timestamp is widened as t = ts + overflow * 2^31.

inline constexpr std::size_t aedat_packet_header_size = 28;

/// Parse AEDAT 3.1 bytes. The container carries no sensor geometry; pass
/// width/height if known, or leave 0 to infer the tightest bounds from the
/// decoded events.
inline EventStream parse_aedat31(std::string_view bytes, std::uint32_t width = 0,
                                 std::uint32_t height = 0) {
    std::size_t pos = 0;
    while (pos < bytes.size() && bytes[pos] == '#') {
        std::size_t nl = bytes.find('\n', pos);
        require(nl != std::string_view::npos, errc::truncated, "unterminated header line");
        pos = nl + 1;
    }
    EventStream s{{}, width, height};
    const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
    while (pos < bytes.size()) {
        require(bytes.size() - pos >= aedat_packet_header_size, errc::truncated,
                "packet header incomplete");
        const unsigned char* h = base + pos;
        const std::int16_t event_type = detail::read_i16le(h);
        const std::int32_t event_size = detail::read_i32le(h + 4);
        const std::int32_t ts_overflow = detail::read_i32le(h + 12);
        const std::int32_t event_number = detail::read_i32le(h + 20);
        require(event_size > 0 && event_number >= 0, errc::truncated, "nonsensical packet header");
        pos += aedat_packet_header_size;
        const std::uint64_t payload =
            static_cast<std::uint64_t>(event_size) * static_cast<std::uint64_t>(event_number);
        require(bytes.size() - pos >= payload, errc::truncated, "packet payload incomplete");
        if (event_type == 1) {
            require(event_size == 8, errc::unsupported_event_size,
                    "polarity packet with eventSize " + std::to_string(event_size));
            const unsigned char* q = base + pos;
            for (std::int32_t i = 0; i < event_number; ++i, q += 8) {
                const std::uint32_t w0 = detail::read_u32le(q);
                if ((w0 & 1u) == 0) continue;  // invalidated event
                Event e;
                e.p = static_cast<std::uint8_t>((w0 >> 1) & 1u);
                e.y = static_cast<std::uint16_t>((w0 >> 2) & 0x7fffu);
                e.x = static_cast<std::uint16_t>((w0 >> 17) & 0x7fffu);
                e.t = static_cast<std::uint64_t>(detail::read_u32le(q + 4)) +
                      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ts_overflow)) << 31);
                s.events.push_back(e);
            }
        }
        pos += payload;
    }
    if (width == 0 && height == 0) {
        for (const Event& e : s.events) {
            s.width = std::max<std::uint32_t>(s.width, e.x + 1u);
            s.height = std::max<std::uint32_t>(s.height, e.y + 1u);
        }
    } else {
        s.validate_bounds();
    }
    s.sort_by_time();
    return s;
}

// --- file helpers ------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), errc::truncated, "cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::string& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), errc::truncated, "cannot open " + path + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    require(out.good(), errc::truncated, "short write to " + path);
}

}  // namespace evmae
