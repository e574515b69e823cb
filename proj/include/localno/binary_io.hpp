#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "localno/error.hpp"
#include "vendor_json.hpp"

namespace localno::io {

using json = nlohmann::json;

template <class T>
T to_little_endian(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <class T>
void write_array(std::ostream& os, std::span<const T> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (T v : values) {
      v = to_little_endian(v);
      os.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
  }
}

template <class T>
void read_array(std::istream& is, std::span<T> values, const std::string& what) {
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (static_cast<std::size_t>(is.gcount()) != values.size_bytes())
    throw Error(ErrorKind::IncompatibleDataset, what + ": truncated payload");
  if constexpr (std::endian::native != std::endian::little)
    for (T& v : values) v = to_little_endian(v);
}

/// Container used by dataset, checkpoint and kernel files:
///   8-byte magic | uint64 LE header length | JSON header | raw payload.
inline void write_container(const std::string& path, std::string_view magic, const json& header,
                            const std::function<void(std::ostream&)>& payload) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot open for writing: " + path);
  std::string m(magic);
  m.resize(8, '\0');
  os.write(m.data(), 8);
  const std::string text = header.dump();
  const std::uint64_t len = to_little_endian<std::uint64_t>(text.size());
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  payload(os);
  if (!os) throw Error(ErrorKind::Io, "write failed: " + path);
}

/// Opens a container, validates the magic and returns the parsed header with
/// the stream positioned at the payload.
inline json open_container(std::ifstream& is, const std::string& path, std::string_view magic) {
  is.open(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open: " + path);
  char m[8] = {};
  is.read(m, 8);
  std::string expected(magic);
  expected.resize(8, '\0');
  if (is.gcount() != 8 || std::memcmp(m, expected.data(), 8) != 0)
    throw Error(ErrorKind::IncompatibleDataset, path + ": bad magic");
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (is.gcount() != sizeof(len)) throw Error(ErrorKind::IncompatibleDataset, path + ": truncated header");
  len = to_little_endian(len);
  if (len > (1u << 26)) throw Error(ErrorKind::IncompatibleDataset, path + ": implausible header length");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(is.gcount()) != len)
    throw Error(ErrorKind::IncompatibleDataset, path + ": truncated header");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IncompatibleDataset, path + ": header is not valid JSON (" + e.what() + ")");
  }
}

inline std::uint64_t remaining_bytes(std::ifstream& is) {
  const auto here = is.tellg();
  is.seekg(0, std::ios::end);
  const auto end = is.tellg();
  is.seekg(here);
  return static_cast<std::uint64_t>(end - here);
}

}  // namespace localno::io
