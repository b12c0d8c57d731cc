#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>

#include "eeknn/common.hpp"

namespace eeknn::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are not supported");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    check();
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_span(std::span<const T> v) {
    if (v.empty()) return;
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size_bytes()));
    check();
  }

  void put_bytes(std::string_view s) {
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    check();
  }

  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

 private:
  void check() {
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open for reading: " + path);
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  std::uint64_t offset() const { return offset_; }
  std::uint64_t size() const { return size_; }
  std::uint64_t remaining() const { return size_ - offset_; }
  bool at_end() const { return offset_ == size_; }
  const std::string& path() const { return path_; }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get(std::string_view what) {
    T v{};
    read_raw(reinterpret_cast<char*>(&v), sizeof(T), what);
    return v;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void get_span(std::span<T> out, std::string_view what) {
    if (out.empty()) return;
    read_raw(reinterpret_cast<char*>(out.data()), out.size_bytes(), what);
  }

  std::string get_bytes(std::size_t n, std::string_view what) {
    std::string s(n, '\0');
    read_raw(s.data(), n, what);
    return s;
  }

  [[noreturn]] void fail(std::string_view what, std::uint64_t at) const {
    throw FormatError(path_ + ": " + std::string(what) + " at byte offset " + std::to_string(at));
  }

 private:
  void read_raw(char* dst, std::size_t n, std::string_view what) {
    if (remaining() < n) fail(std::string("truncated ") + std::string(what), offset_);
    in_.read(dst, static_cast<std::streamsize>(n));
    if (!in_) fail(std::string("read error in ") + std::string(what), offset_);
    offset_ += n;
  }

  std::string path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t offset_ = 0;
};

}  // namespace eeknn::io
