#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pyrgs {

struct Vec3f {
  float x = 0.0f, y = 0.0f, z = 0.0f;
  friend bool operator==(const Vec3f&, const Vec3f&) = default;
};

struct Vec3d {
  double x = 0.0, y = 0.0, z = 0.0;
  friend Vec3d operator+(const Vec3d& a, const Vec3d& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3d operator-(const Vec3d& a, const Vec3d& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3d operator*(const Vec3d& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3d&, const Vec3d&) = default;
};

inline Vec3d to_double(const Vec3f& v) { return {v.x, v.y, v.z}; }

inline double dot(const Vec3d& a, const Vec3d& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double squared_norm(const Vec3d& v) { return dot(v, v); }
inline double norm(const Vec3d& v) { return std::sqrt(squared_norm(v)); }

// Stable error codes. The CLI surfaces these verbatim in machine-readable
// error JSON, so renaming an enumerator is a breaking change.
enum class Errc {
  missing_file,
  io_error,
  malformed_header,
  malformed_payload,
  non_float_property,
  non_finite_value,
  malformed_json,
  missing_field,
  non_orthonormal_rotation,
  invalid_camera,
  invalid_cloud,
  invalid_config,
  invalid_argument,
  empty_input,
  out_of_range,
  degenerate_dispersion,
  degenerate_channel,
  quant_overflow,
  alphabet_too_wide,
  symbol_out_of_range,
  truncated_stream,
  checksum_mismatch,
  bad_magic,
  header_mismatch,
  mismatched_cloud,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::missing_file: return "missing_file";
    case Errc::io_error: return "io_error";
    case Errc::malformed_header: return "malformed_header";
    case Errc::malformed_payload: return "malformed_payload";
    case Errc::non_float_property: return "non_float_property";
    case Errc::non_finite_value: return "non_finite_value";
    case Errc::malformed_json: return "malformed_json";
    case Errc::missing_field: return "missing_field";
    case Errc::non_orthonormal_rotation: return "non_orthonormal_rotation";
    case Errc::invalid_camera: return "invalid_camera";
    case Errc::invalid_cloud: return "invalid_cloud";
    case Errc::invalid_config: return "invalid_config";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::empty_input: return "empty_input";
    case Errc::out_of_range: return "out_of_range";
    case Errc::degenerate_dispersion: return "degenerate_dispersion";
    case Errc::degenerate_channel: return "degenerate_channel";
    case Errc::quant_overflow: return "quant_overflow";
    case Errc::alphabet_too_wide: return "alphabet_too_wide";
    case Errc::symbol_out_of_range: return "symbol_out_of_range";
    case Errc::truncated_stream: return "truncated_stream";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::bad_magic: return "bad_magic";
    case Errc::header_mismatch: return "header_mismatch";
    case Errc::mismatched_cloud: return "mismatched_cloud";
  }
  return "unknown";
}

// All library failures are reported through this type. `level` and `channel`
// are set for codec errors so callers can report which segment failed.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message) : std::runtime_error(message), code_(code) {}
  Error(Errc code, const std::string& message, int level, std::string channel)
      : std::runtime_error(message), code_(code), level_(level), channel_(std::move(channel)) {}

  Errc code() const { return code_; }
  int level() const { return level_; }
  const std::string& channel() const { return channel_; }

 private:
  Errc code_;
  int level_ = -1;
  std::string channel_;
};

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> data) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

// Little-endian serialization helpers shared by the PLY writer and the
// compressed container.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { append_le(v, 2); }
  void u32(std::uint32_t v) { append_le(v, 4); }
  void u64(std::uint64_t v) { append_le(v, 8); }
  void i64(std::int64_t v) { append_le(static_cast<std::uint64_t>(v), 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  void text(const std::string& s) {
    buf_.insert(buf_.end(), reinterpret_cast<const std::uint8_t*>(s.data()),
                reinterpret_cast<const std::uint8_t*>(s.data()) + s.size());
  }

  // LEB128 with zigzag mapping for signed values.
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(static_cast<std::uint8_t>(v) | 0x80);
      v >>= 7;
    }
    buf_.push_back(static_cast<std::uint8_t>(v));
  }
  void svarint(std::int64_t v) {
    varint((static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63));
  }

  std::size_t size() const { return buf_.size(); }
  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void append_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return static_cast<std::uint16_t>(read_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  std::uint64_t u64() { return read_le(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(read_le(8)); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > data_.size() - pos_) throw Error(Errc::truncated_stream, "unexpected end of stream");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string text(std::size_t n) {
    auto s = take(n);
    return std::string(reinterpret_cast<const char*>(s.data()), s.size());
  }

  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      std::uint8_t b = u8();
      v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    throw Error(Errc::malformed_payload, "varint too long");
  }
  std::int64_t svarint() {
    std::uint64_t v = varint();
    return static_cast<std::int64_t>((v >> 1) ^ (~(v & 1) + 1));
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint64_t read_le(int n) {
    auto s = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace pyrgs
