// Copyright 2026  The cueprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "cueprobe/sidecar.hpp"

#include <bit>
#include <cstring>
#include <iterator>

#include "cueprobe/audio.hpp"

namespace cueprobe {

static_assert(std::endian::native == std::endian::little,
              "sidecar I/O assumes a little-endian host");

SidecarWriter::SidecarWriter(const std::filesystem::path& path,
                             std::string_view magic, std::uint32_t version)
    : path_(path) {
  if (magic.size() != 4) throw Error("sidecar magic must be 4 bytes");
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  os_.open(path, std::ios::binary);
  if (!os_) throw Error("cannot write sidecar " + path.string());
  os_.write(magic.data(), 4);
  u32(version);
}

void SidecarWriter::u8(std::uint8_t v) {
  os_.write(reinterpret_cast<const char*>(&v), 1);
}
void SidecarWriter::u32(std::uint32_t v) {
  os_.write(reinterpret_cast<const char*>(&v), 4);
}
void SidecarWriter::u64(std::uint64_t v) {
  os_.write(reinterpret_cast<const char*>(&v), 8);
}
void SidecarWriter::f64(double v) {
  os_.write(reinterpret_cast<const char*>(&v), 8);
}
void SidecarWriter::f64s(std::span<const double> v) {
  os_.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void SidecarWriter::close() {
  os_.close();
  if (!os_) throw Error("write failed for " + path_.string());
}

SidecarReader::SidecarReader(const std::filesystem::path& path,
                             std::string_view magic,
                             std::uint32_t max_version)
    : path_(path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open sidecar " + path.string());
  bytes_.assign(std::istreambuf_iterator<char>(is),
                std::istreambuf_iterator<char>());
  const unsigned char* m = take(4);
  if (std::memcmp(m, magic.data(), 4) != 0) {
    throw Error(path.string() + ": bad magic, expected " + std::string(magic));
  }
  version_ = u32();
  if (version_ == 0 || version_ > max_version) {
    throw Error(path.string() + ": unsupported version " +
                std::to_string(version_));
  }
}

const unsigned char* SidecarReader::take(std::size_t n) {
  if (pos_ + n > bytes_.size()) {
    throw Error(path_.string() + ": truncated sidecar");
  }
  const unsigned char* p = bytes_.data() + pos_;
  pos_ += n;
  return p;
}

std::uint8_t SidecarReader::u8() { return *take(1); }
std::uint32_t SidecarReader::u32() {
  std::uint32_t v;
  std::memcpy(&v, take(4), 4);
  return v;
}
std::uint64_t SidecarReader::u64() {
  std::uint64_t v;
  std::memcpy(&v, take(8), 8);
  return v;
}
double SidecarReader::f64() {
  double v;
  std::memcpy(&v, take(8), 8);
  return v;
}
std::vector<double> SidecarReader::f64s(std::size_t n) {
  std::vector<double> v(n);
  if (n > 0) std::memcpy(v.data(), take(n * sizeof(double)), n * sizeof(double));
  return v;
}

}  // namespace cueprobe
