#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tadlab/common.hpp"

namespace tadlab::io {

// Little-endian binary writers/readers. The project's cache files are defined
// as little-endian 64-bit payloads; on big-endian hosts bytes are swapped.

void write_u64(std::ostream& os, std::uint64_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_f64(std::ostream& os, double v);
void write_f64_block(std::ostream& os, const double* p, std::size_t n);

std::uint64_t read_u64(std::istream& is);
std::uint32_t read_u32(std::istream& is);
double read_f64(std::istream& is);
void read_f64_block(std::istream& is, double* p, std::size_t n);

void write_matrix(std::ostream& os, const Matrix& m);
Matrix read_matrix(std::istream& is);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

// FNV-1a 64-bit; cache keys combine data bytes, config strings and seeds.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xCBF29CE484222325ULL);
std::uint64_t hash_file(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace tadlab::io
