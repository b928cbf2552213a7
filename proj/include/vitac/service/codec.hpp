#pragma once

#include "vitac/core/types.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include <bit>
#include <cstring>

namespace vitac {

static_assert(std::endian::native == std::endian::little, "wire arrays assume a little-endian host");

class ProtocolError : public Error {
 public:
  using Error::Error;
};

inline std::string base64_encode(const std::uint8_t* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return base64_encode(bytes.data(), bytes.size());
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ProtocolError("bad-message", "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  if (text.empty()) return out;
  const int len = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
  if (len < 0) throw ProtocolError("bad-message", "invalid base64 data");
  // EVP_DecodeBlock keeps the bytes that padding stands for.
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(len) - pad);
  return out;
}

inline std::string sha256_hex(const void* data, std::size_t n) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(static_cast<const unsigned char*>(data), n, digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

/// Typed n-d array as carried on the wire: raw little-endian bytes plus dtype
/// ("f32", "i32" or "u8") and shape.
struct WireArray {
  std::string dtype = "f32";
  std::vector<int> shape;
  std::vector<std::uint8_t> bytes;

  bool operator==(const WireArray&) const = default;

  std::size_t count() const {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    return n;
  }
};

inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32" || dtype == "i32") return 4;
  if (dtype == "u8") return 1;
  throw ProtocolError("bad-message", "unknown dtype '" + dtype + "'");
}

template <class T>
WireArray make_wire_array(const std::string& dtype, std::vector<int> shape, const std::vector<T>& values) {
  static_assert(std::is_trivially_copyable_v<T>);
  WireArray a;
  a.dtype = dtype;
  a.shape = std::move(shape);
  if (sizeof(T) != dtype_size(dtype) || values.size() != a.count())
    throw ProtocolError("bad-message", "array size does not match its shape");
  a.bytes.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), a.bytes.size());
  return a;
}

template <class T>
std::vector<T> wire_values(const WireArray& a) {
  if (sizeof(T) != dtype_size(a.dtype)) throw ProtocolError("bad-message", "unexpected dtype '" + a.dtype + "'");
  std::vector<T> out(a.bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), a.bytes.data(), a.bytes.size());
  return out;
}

inline void to_json(nlohmann::json& j, const WireArray& a) {
  j = {{"dtype", a.dtype}, {"shape", a.shape}, {"data", base64_encode(a.bytes)}};
}

inline void from_json(const nlohmann::json& j, WireArray& a) {
  a.dtype = j.at("dtype").get<std::string>();
  a.shape = j.at("shape").get<std::vector<int>>();
  for (int s : a.shape)
    if (s < 0) throw ProtocolError("bad-message", "negative array dimension");
  a.bytes = base64_decode(j.at("data").get<std::string>());
  if (a.bytes.size() != a.count() * dtype_size(a.dtype))
    throw ProtocolError("bad-message", "array data does not match its shape");
}

}  // namespace vitac
