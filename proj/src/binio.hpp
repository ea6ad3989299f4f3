#pragma once

// Little-endian binary helpers for the checkpoint and dataset containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "srkn/errors.hpp"

namespace srkn::binio {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("unexpected end of file");
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, std::uint64_t limit = 1u << 30) {
    const auto n = get<std::uint64_t>(is);
    if (n > limit) throw IoError("corrupt length field");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw IoError("unexpected end of file");
    return s;
}

inline void put_doubles(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_doubles(std::istream& is, std::vector<double>& v) {
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!is) throw IoError("unexpected end of file");
}

inline void put_magic(std::ostream& os, const char (&magic)[9]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char (&magic)[9], const std::string& what) {
    char buf[8];
    is.read(buf, 8);
    if (!is || std::memcmp(buf, magic, 8) != 0) throw IoError("not a " + what + " file");
}

}  // namespace srkn::binio
