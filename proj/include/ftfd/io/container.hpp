#pragma once

// Tensor container: "FTFD" | u8 version=1 | u8 dtype (0=f32, 1=f64) | u8 rank
// | rank x u32 dims | row-major payload. All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

#include "ftfd/tensor.hpp"

namespace ftfd::io {

class FormatError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, dtype_mismatch, malformed, digest_mismatch };
  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kTensorMagic[4] = {'F', 'T', 'F', 'D'};
inline constexpr std::uint8_t kTensorVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "containers hold f32 or f64");
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

inline const char* dtype_name(std::uint8_t d) { return d == 0 ? "f32" : d == 1 ? "f64" : "unknown"; }

namespace le {

template <typename U>
void put(std::string& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get(std::string_view in, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

template <typename F>
void put_float(std::string& out, F f) {
  using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  put<U>(out, std::bit_cast<U>(f));
}

template <typename F>
F get_float(std::string_view in, std::size_t at) {
  using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  return std::bit_cast<F>(get<U>(in, at));
}

}  // namespace le

template <typename T>
std::string encode_tensor(const Tensor<T>& t) {
  if (t.rank() > 255) throw std::invalid_argument("encode_tensor: rank above 255");
  std::string out(kTensorMagic, 4);
  out.push_back(static_cast<char>(kTensorVersion));
  out.push_back(static_cast<char>(dtype_of<T>()));
  out.push_back(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > 0xFFFFFFFFu) throw std::invalid_argument("encode_tensor: dimension exceeds u32");
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + t.size() * sizeof(T));
  for (T v : t.data()) le::put_float(out, v);
  return out;
}

/// Decodes one container from the front of `bytes`; `consumed` receives its length.
template <typename T>
Tensor<T> decode_tensor(std::string_view bytes, std::size_t* consumed = nullptr, std::string_view origin = "tensor") {
  auto fail = [&](FormatError::Kind k, const std::string& msg) { throw FormatError(k, std::string(origin) + ": " + msg); };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) fail(FormatError::Kind::bad_magic, "bad magic (expected \"FTFD\")");
  if (bytes.size() < 7) fail(FormatError::Kind::truncated, "truncated header");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kTensorVersion) fail(FormatError::Kind::bad_version, "unsupported version " + std::to_string(version));
  const auto dtype = static_cast<std::uint8_t>(bytes[5]);
  if (dtype > 1) fail(FormatError::Kind::malformed, "unknown dtype code " + std::to_string(dtype));
  if (dtype != static_cast<std::uint8_t>(dtype_of<T>())) {
    fail(FormatError::Kind::dtype_mismatch,
         std::string("dtype mismatch: file holds ") + dtype_name(dtype) + ", reader expects " + dtype_name(std::uint8_t(dtype_of<T>())));
  }
  const std::size_t rank = static_cast<std::uint8_t>(bytes[6]);
  std::size_t at = 7;
  if (bytes.size() < at + 4 * rank) fail(FormatError::Kind::truncated, "truncated dims");
  Shape shape(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i, at += 4) {
    shape[i] = le::get<std::uint32_t>(bytes, at);
    if (shape[i] == 0) fail(FormatError::Kind::malformed, "zero-length dimension " + std::to_string(i));
    count *= shape[i];
  }
  if ((bytes.size() - at) / sizeof(T) < count) {
    fail(FormatError::Kind::truncated, "truncated payload: need " + std::to_string(count * sizeof(T)) + " bytes, have " +
                                           std::to_string(bytes.size() - at));
  }
  std::vector<T> values(count);
  for (std::size_t i = 0; i < count; ++i, at += sizeof(T)) values[i] = le::get_float<T>(bytes, at);
  if (consumed) *consumed = at;
  else if (at != bytes.size()) fail(FormatError::Kind::malformed, std::to_string(bytes.size() - at) + " trailing bytes");
  return Tensor<T>::from(std::move(shape), std::move(values));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

template <typename T>
void write_tensor(const std::string& path, const Tensor<T>& t) {
  write_file(path, encode_tensor(t));
}

template <typename T>
Tensor<T> read_tensor(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t used = 0;
  auto t = decode_tensor<T>(bytes, &used, path);
  if (used != bytes.size()) {
    throw FormatError(FormatError::Kind::malformed, path + ": " + std::to_string(bytes.size() - used) + " trailing bytes");
  }
  return t;
}

}  // namespace ftfd::io
