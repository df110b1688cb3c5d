#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cpcfl/errors.hpp"

// Little-endian binary readers/writers shared by the container formats.

namespace cpcfl::binio {

inline void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 8);
}

inline void write_i32(std::ostream& out, std::int32_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

inline void write_f64_array(std::ostream& out, const double* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) write_f64(out, data[i]);
    }
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint8_t read_u8(std::istream& in, const char* what) {
    const int c = in.get();
    if (c == EOF) throw FormatError(std::string(what) + ": truncated file");
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    char buf[4];
    if (!in.read(buf, 4)) throw FormatError(std::string(what) + ": truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& in, const char* what) {
    char buf[8];
    if (!in.read(buf, 8)) throw FormatError(std::string(what) + ": truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

inline std::int32_t read_i32(std::istream& in, const char* what) {
    return static_cast<std::int32_t>(read_u32(in, what));
}

inline double read_f64(std::istream& in, const char* what) {
    const std::uint64_t bits = read_u64(in, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void read_f64_array(std::istream& in, double* data, std::size_t n, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8))) {
            throw FormatError(std::string(what) + ": truncated payload");
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) data[i] = read_f64(in, what);
    }
}

inline std::string read_string(std::istream& in, const char* what) {
    const std::uint32_t len = read_u32(in, what);
    std::string s(len, '\0');
    if (len > 0 && !in.read(s.data(), len)) {
        throw FormatError(std::string(what) + ": truncated string");
    }
    return s;
}

inline std::ofstream open_output(const std::string& path, const char* what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(std::string(what) + ": cannot open " + path + " for writing");
    return out;
}

inline std::ifstream open_input(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string(what) + ": cannot open " + path);
    return in;
}

inline void check_magic(std::istream& in, const char* magic, const char* what) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
        throw FormatError(std::string(what) + ": bad magic");
    }
}

}  // namespace cpcfl::binio
