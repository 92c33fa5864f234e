// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

namespace isac {

// Shortest round-trip text for a double; "nan", "inf", "-inf" otherwise.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, p);
}

/// Comma-separated writer. Fields are appended with `<<`, rows ended with
/// end_row(). Throws on any I/O failure.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header) : path_(path) {
    if (path.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(path.parent_path(), ec);
      if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (auto h : header) field(std::string(h));
    end_row();
  }

  CsvWriter& operator<<(double v) { return field(format_double(v)); }
  CsvWriter& operator<<(const std::string& s) { return field(s); }
  CsvWriter& operator<<(const char* s) { return field(s); }
  template <class T>
    requires(std::is_integral_v<T> && !std::is_same_v<T, bool>)
  CsvWriter& operator<<(T v) {
    return field(std::to_string(v));
  }
  CsvWriter& operator<<(bool b) { return field(b ? "1" : "0"); }

  void end_row() {
    out_ << '\n';
    first_ = true;
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

  void close() {
    out_.close();
    if (out_.fail()) throw std::runtime_error("close failed: " + path_.string());
  }

 private:
  CsvWriter& field(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }

  std::filesystem::path path_;
  std::ofstream out_;
  bool first_{true};
};

}  // namespace isac
