#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tabi::io {

/// Thrown for malformed binary files (bad magic, truncation).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// FNV-1a 64 of a file's bytes, as 16 lowercase hex digits.
std::string file_digest(const std::filesystem::path& path);

// Little-endian primitives.
void write_u32(std::ostream& out, std::uint32_t v);
void write_f64s(std::ostream& out, std::span<const double> v);
void write_f32s(std::ostream& out, std::span<const float> v);
void write_magic(std::ostream& out, std::string_view magic);

std::uint32_t read_u32(std::istream& in, std::string_view what);
void read_f64s(std::istream& in, std::span<double> v, std::string_view what);
void read_f32s(std::istream& in, std::span<float> v, std::string_view what);
void expect_magic(std::istream& in, std::string_view magic);

}  // namespace tabi::io
