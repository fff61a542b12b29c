// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/archive.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace gnet {

namespace {

constexpr std::string_view kMagic = "GNETW1\n";

static_assert(std::endian::native == std::endian::little, "archive payloads are stored little-endian");

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
  }
  return true;
}

// Reads one '\n'-terminated line starting at `pos`.
std::string_view next_line(std::string_view bytes, std::size_t& pos, const char* what) {
  const std::size_t end = bytes.find('\n', pos);
  if (end == std::string_view::npos) throw ArchiveError(std::string("truncated archive: missing ") + what);
  std::string_view line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

std::size_t parse_count(std::string_view token, const std::string& context) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || p != token.data() + token.size() || token.empty()) {
    throw ArchiveError("malformed " + context + ": '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const std::size_t j = line.find(' ', i);
    const std::size_t end = j == std::string_view::npos ? line.size() : j;
    out.push_back(line.substr(i, end - i));
    i = end + 1;
  }
  return out;
}

}  // namespace

const char* to_string(DType d) { return d == DType::F32 ? "f32" : "i64"; }

std::size_t ArchiveEntry::element_count() const { return shape.empty() ? 1 : shape_volume(shape); }

void WeightArchive::put(const std::string& name, const Shape& shape, std::span<const float> values) {
  if (!valid_name(name)) throw ArchiveError("invalid tensor name '" + name + "'");
  ArchiveEntry e;
  e.dtype = DType::F32;
  e.shape = shape;
  if (e.element_count() != values.size()) throw ArchiveError("tensor " + name + ": value count does not match shape");
  e.f32.assign(values.begin(), values.end());
  entries_[name] = std::move(e);
}

void WeightArchive::put(const std::string& name, const Shape& shape, std::span<const std::int64_t> values) {
  if (!valid_name(name)) throw ArchiveError("invalid tensor name '" + name + "'");
  ArchiveEntry e;
  e.dtype = DType::I64;
  e.shape = shape;
  if (e.element_count() != values.size()) throw ArchiveError("tensor " + name + ": value count does not match shape");
  e.i64.assign(values.begin(), values.end());
  entries_[name] = std::move(e);
}

void WeightArchive::put_scalar(const std::string& name, std::int64_t value) {
  put(name, Shape{}, std::span<const std::int64_t>(&value, 1));
}

const ArchiveEntry& WeightArchive::at(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ArchiveError("archive has no tensor named " + name);
  return it->second;
}

std::int64_t WeightArchive::scalar(const std::string& name) const {
  const ArchiveEntry& e = at(name);
  if (e.dtype != DType::I64 || e.i64.size() != 1) throw ArchiveError("tensor " + name + " is not an i64 scalar");
  return e.i64[0];
}

template <typename T>
void WeightArchive::read_into(const std::string& name, BasicTensor<T>& out) const {
  const ArchiveEntry& e = at(name);
  if (e.dtype != DType::F32) throw ArchiveError("tensor " + name + " is not f32");
  if (e.shape != out.shape()) {
    throw ArchiveError("tensor " + name + ": stored shape " + shape_to_string(e.shape) + " but model expects " +
                       shape_to_string(out.shape()));
  }
  std::copy(e.f32.begin(), e.f32.end(), out.values().begin());
}

std::vector<std::string> WeightArchive::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::string WeightArchive::serialize() const {
  std::ostringstream os;
  os << kMagic << entries_.size() << '\n';
  for (const auto& [name, e] : entries_) {
    os << name << ' ' << to_string(e.dtype);
    for (std::size_t d : e.shape) os << ' ' << d;
    os << '\n';
  }
  std::string out = os.str();
  for (const auto& [name, e] : entries_) {
    if (e.dtype == DType::F32) {
      out.append(reinterpret_cast<const char*>(e.f32.data()), e.f32.size() * sizeof(float));
    } else {
      out.append(reinterpret_cast<const char*>(e.i64.data()), e.i64.size() * sizeof(std::int64_t));
    }
  }
  return out;
}

WeightArchive WeightArchive::parse(std::string_view bytes) {
  if (!bytes.starts_with(kMagic)) throw ArchiveError("not a weight archive (bad magic)");
  std::size_t pos = kMagic.size();
  const std::size_t count = parse_count(next_line(bytes, pos, "entry count"), "entry count");

  struct Pending {
    std::string name;
    ArchiveEntry entry;
  };
  std::vector<Pending> manifest;
  manifest.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto tokens = split_spaces(next_line(bytes, pos, "manifest line"));
    if (tokens.size() < 2) throw ArchiveError("malformed manifest line " + std::to_string(i + 1));
    Pending p;
    p.name = std::string(tokens[0]);
    if (!valid_name(p.name)) throw ArchiveError("malformed manifest line " + std::to_string(i + 1));
    if (tokens[1] == "f32") {
      p.entry.dtype = DType::F32;
    } else if (tokens[1] == "i64") {
      p.entry.dtype = DType::I64;
    } else {
      throw ArchiveError("tensor " + p.name + ": unknown dtype '" + std::string(tokens[1]) + "'");
    }
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const std::size_t d = parse_count(tokens[t], "extent of " + p.name);
      if (d == 0) throw ArchiveError("tensor " + p.name + ": zero extent");
      p.entry.shape.push_back(d);
    }
    if (!manifest.empty() && !(manifest.back().name < p.name)) {
      throw ArchiveError("manifest not sorted or has duplicate near " + p.name);
    }
    manifest.push_back(std::move(p));
  }

  WeightArchive out;
  for (auto& p : manifest) {
    const std::size_t n = p.entry.element_count();
    const std::size_t width = p.entry.dtype == DType::F32 ? sizeof(float) : sizeof(std::int64_t);
    if (bytes.size() - pos < n * width) throw ArchiveError("truncated archive: payload of " + p.name + " is short");
    if (p.entry.dtype == DType::F32) {
      p.entry.f32.resize(n);
      std::memcpy(p.entry.f32.data(), bytes.data() + pos, n * width);
    } else {
      p.entry.i64.resize(n);
      std::memcpy(p.entry.i64.data(), bytes.data() + pos, n * width);
    }
    pos += n * width;
    out.entries_.emplace(std::move(p.name), std::move(p.entry));
  }
  if (pos != bytes.size()) throw ArchiveError("archive has " + std::to_string(bytes.size() - pos) + " trailing bytes");
  return out;
}

void WeightArchive::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

WeightArchive WeightArchive::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::random_device rd;
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move output into place at " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

template void WeightArchive::read_into(const std::string&, BasicTensor<float>&) const;
template void WeightArchive::read_into(const std::string&, BasicTensor<double>&) const;

}  // namespace gnet
