// Copyright 2026 The PopSteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "popsteer/types.hpp"

namespace popsteer {

// ---------------------------------------------------------------------------
// Binary model containers. All multi-byte fields are little-endian; doubles
// are IEEE-754 binary64. Each file starts with a 4-byte magic and a u32
// version so loaders can reject foreign or stale artifacts.
// ---------------------------------------------------------------------------

class BinaryWriter {
public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open for writing: " + path);
  }

  void magic(const char tag[4], std::uint32_t version) {
    out_.write(tag, 4);
    u32(version);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void doubles(const double* p, std::size_t n) { raw(p, n * sizeof(double)); }

private:
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  std::ofstream out_;
};

class BinaryReader {
public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot open: " + path);
  }

  void expect_magic(const char tag[4], std::uint32_t version) {
    char buf[4];
    raw(buf, 4);
    if (std::memcmp(buf, tag, 4) != 0)
      throw DataError(path_ + ": not a " + std::string(tag, 4) + " file");
    const std::uint32_t v = u32();
    if (v != version)
      throw DataError(path_ + ": unsupported version " + std::to_string(v));
  }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
  std::string str() {
    const std::uint64_t n = u64();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void doubles(double* p, std::size_t n) { raw(p, n * sizeof(double)); }

private:
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw DataError(path_ + ": truncated file");
  }
  std::ifstream in_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Text artifacts (TSV/CSV). Every file begins with one comment line
//   # popsteer <artifact> v<version> config=<hash>
// which loaders validate before trusting the contents.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string artifact_header(const std::string& name, const std::string& config_hash) {
  return "# popsteer " + name + " v1 config=" + config_hash + "\n";
}

// Reads and validates the artifact comment line; returns the stream
// positioned at the first content line.
inline void expect_artifact(std::istream& in, const std::string& name, const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string want = "# popsteer " + name + " v1";
  if (line.compare(0, want.size(), want) != 0)
    throw DataError(path + ": missing or foreign artifact header (expected '" + want + "')");
}

inline std::ofstream open_artifact(const std::string& path, const std::string& name,
                                   const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << artifact_header(name, config_hash);
  return out;
}

inline std::ofstream open_artifact(const std::string& path, const std::string& name,
                                   std::uint64_t config_hash) {
  return open_artifact(path, name, hex64(config_hash));
}

// Decimal formats: fmt_exact round-trips doubles bit-for-bit (artifacts that
// feed further computation); fmt_metric is for presentational CSV columns.
inline std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace popsteer
