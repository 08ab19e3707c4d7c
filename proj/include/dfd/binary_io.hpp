#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dfd/common.hpp"

namespace dfd::io {

// All on-disk formats are little-endian.
static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw InputError("cannot write " + path.string());
  }

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
  void put_array(const T* data, std::size_t count) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
  }

  void finish() {
    out_.flush();
    if (!out_) throw InputError("write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw InputError("cannot open " + path.string());
  }

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(m.size()));
    if (!in_ || got != m)
      throw FormatError(path_.string() + ": bad magic, expected " + std::string(m));
  }

  void expect_version(std::uint32_t supported) {
    const auto v = get<std::uint32_t>();
    if (v != supported)
      throw FormatError(path_.string() + ": unsupported version " + std::to_string(v) +
                        " (reader supports " + std::to_string(supported) + ")");
  }

  template <typename T>
  T get() {
    T value;
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw FormatError(path_.string() + ": truncated file");
    return value;
  }

  template <typename T>
  void get_array(T* data, std::size_t count) {
    in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    if (!in_) throw FormatError(path_.string() + ": truncated file");
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace dfd::io
