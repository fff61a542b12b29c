// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Named-tensor archive.
//
//   GNETW1\n
//   <entry count>\n
//   <name> <dtype> <d0> <d1> ...\n      one line per entry, sorted by name
//   <payloads>                          little-endian, in manifest order
//
// dtype is f32 or i64. A rank-0 entry has no extents and one element.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnet/tensor.hpp"

namespace gnet {

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType { F32, I64 };

const char* to_string(DType d);

struct ArchiveEntry {
  DType dtype = DType::F32;
  Shape shape;
  std::vector<float> f32;
  std::vector<std::int64_t> i64;

  std::size_t element_count() const;
};

class WeightArchive {
 public:
  void put(const std::string& name, const Shape& shape, std::span<const float> values);
  void put(const std::string& name, const Shape& shape, std::span<const std::int64_t> values);
  void put_scalar(const std::string& name, std::int64_t value);

  template <typename T>
  void put(const std::string& name, const BasicTensor<T>& t) {
    std::vector<float> v(t.values().begin(), t.values().end());
    put(name, t.shape(), std::span<const float>(v));
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ArchiveEntry& at(const std::string& name) const;
  std::int64_t scalar(const std::string& name) const;
  // Copies an f32 entry into `out`, which must already have the stored shape.
  template <typename T>
  void read_into(const std::string& name, BasicTensor<T>& out) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void erase(const std::string& name) { entries_.erase(name); }

  std::string serialize() const;
  static WeightArchive parse(std::string_view bytes);

  // Writes to a sibling temporary file, then renames over `path`.
  void save(const std::filesystem::path& path) const;
  static WeightArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, ArchiveEntry> entries_;
};

// Atomically replaces `path` with `contents`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace gnet
