#include "tadlab/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <sstream>

namespace tadlab::io {

namespace {
template <class T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        T out;
        auto* src = reinterpret_cast<const unsigned char*>(&v);
        auto* dst = reinterpret_cast<unsigned char*>(&out);
        for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
        return out;
    }
}
}  // namespace

void write_u64(std::ostream& os, std::uint64_t v) {
    v = byteswap_if_big(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    v = byteswap_if_big(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    write_u64(os, bits);
}

void write_f64_block(std::ostream& os, const double* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        for (std::size_t i = 0; i < n; ++i) write_f64(os, p[i]);
    }
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw ParseError("binary read: truncated stream");
    return byteswap_if_big(v);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw ParseError("binary read: truncated stream");
    return byteswap_if_big(v);
}

double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

void read_f64_block(std::istream& is, double* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
        if (!is) throw ParseError("binary read: truncated stream");
    } else {
        for (std::size_t i = 0; i < n; ++i) p[i] = read_f64(is);
    }
}

void write_matrix(std::ostream& os, const Matrix& m) {
    write_u64(os, m.rows);
    write_u64(os, m.cols);
    write_f64_block(os, m.data.data(), m.data.size());
}

Matrix read_matrix(std::istream& is) {
    const std::uint64_t r = read_u64(is);
    const std::uint64_t c = read_u64(is);
    Matrix m(r, c);
    read_f64_block(is, m.data.data(), m.data.size());
    return m;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write file: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) { return fnv1a(s.data(), s.size(), h); }

std::uint64_t hash_file(const std::string& path) {
    const std::string bytes = read_file(path);
    return fnv1a(bytes);
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace tadlab::io
