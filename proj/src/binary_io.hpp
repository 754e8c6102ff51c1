#pragma once

// Little-endian fixed-width encoding for the params and cache containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "dna/classifier.hpp"

namespace dna::binio {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

inline void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void put_str(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(std::string("truncated file while reading ") + what);
}
inline std::uint64_t get_u64(std::istream& in, const char* what) {
    std::uint64_t v;
    read_exact(in, &v, sizeof v, what);
    return v;
}
inline std::uint32_t get_u32(std::istream& in, const char* what) {
    std::uint32_t v;
    read_exact(in, &v, sizeof v, what);
    return v;
}
inline double get_f64(std::istream& in, const char* what) {
    double v;
    read_exact(in, &v, sizeof v, what);
    return v;
}
inline std::string get_str(std::istream& in, const char* what, std::uint64_t max_len = 1 << 20) {
    const auto n = get_u64(in, what);
    if (n > max_len) throw FormatError(std::string("corrupt length for ") + what);
    std::string s(n, '\0');
    read_exact(in, s.data(), n, what);
    return s;
}

inline void put_tensor(std::ostream& out, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor get_tensor(std::istream& in) {
    const auto rank = get_u32(in, "tensor rank");
    if (rank > 8) throw FormatError("corrupt tensor rank");
    Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
        d = get_u64(in, "tensor shape");
        if (d > (1ull << 32)) throw FormatError("corrupt tensor dimension");
        total *= d;
        if (total > (1ull << 34)) throw FormatError("corrupt tensor size");
    }
    Tensor t(shape);
    read_exact(in, t.ptr(), t.size() * sizeof(double), "tensor data");
    return t;
}

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
    char buf[8];
    read_exact(in, buf, 8, "magic");
    if (std::memcmp(buf, magic, 8) != 0) throw FormatError(std::string("bad magic, expected ") + magic);
}

}  // namespace dna::binio
