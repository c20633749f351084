#include "tabi/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace tabi::io {

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void write_array(std::ostream& out, std::span<const T> v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  } else {
    for (T x : v) {
      x = to_little(x);
      out.write(reinterpret_cast<const char*>(&x), sizeof(T));
    }
  }
}

template <typename T>
void read_array(std::istream& in, std::span<T> v, std::string_view what) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  if (static_cast<std::size_t>(in.gcount()) != v.size_bytes()) {
    throw FormatError("truncated file while reading " + std::string(what));
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& x : v) x = to_little(x);
  }
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(buf.str())));
  return hex;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64s(std::ostream& out, std::span<const double> v) { write_array(out, v); }
void write_f32s(std::ostream& out, std::span<const float> v) { write_array(out, v); }

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

std::uint32_t read_u32(std::istream& in, std::string_view what) {
  std::uint32_t v = 0;
  read_array(in, std::span<std::uint32_t>(&v, 1), what);
  return v;
}

void read_f64s(std::istream& in, std::span<double> v, std::string_view what) {
  read_array(in, v, what);
}

void read_f32s(std::istream& in, std::span<float> v, std::string_view what) {
  read_array(in, v, what);
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(in.gcount()) != magic.size() || got != magic) {
    throw FormatError("bad magic: expected \"" + std::string(magic) + "\"");
  }
}

}  // namespace tabi::io
