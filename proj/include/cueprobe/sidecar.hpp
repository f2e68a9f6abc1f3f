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

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cueprobe {

// Binary sidecar layout shared by frames, labels and probability streams:
//   4-byte magic | u32 version | payload
// All integers and reals are little-endian; reals are IEEE-754 binary64.

class SidecarWriter {
 public:
  SidecarWriter(const std::filesystem::path& path, std::string_view magic,
                std::uint32_t version);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> v);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream os_;
};

class SidecarReader {
 public:
  /// Throws when the magic differs or the version is newer than
  /// `max_version`.
  SidecarReader(const std::filesystem::path& path, std::string_view magic,
                std::uint32_t max_version);
  std::uint32_t version() const { return version_; }
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t n);
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const unsigned char* take(std::size_t n);

  std::filesystem::path path_;
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t version_ = 0;
};

}  // namespace cueprobe
