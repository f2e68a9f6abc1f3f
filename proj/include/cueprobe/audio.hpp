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

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cueprobe {

/// Sample rate every pipeline entry point requires (one channel per speaker).
inline constexpr int kPipelineSampleRate = 16000;

/// Raised for any contract violation: bad arguments, malformed files,
/// inconsistent frame bundles.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-channel audio. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kPipelineSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// Throws unless `w` is at the pipeline rate. `what` names the caller.
void require_pipeline_rate(const Waveform& w, const std::string& what);

double rms(std::span<const double> x);
double peak_abs(std::span<const double> x);

/// 20*log10(max(value, tiny)); used for every amplitude-to-dB conversion.
double amplitude_db(double amplitude);
double power_db(double power);

/// Rescales in place to peak 0.99 when any |sample| exceeds 1.
/// Returns the applied gain (1.0 when untouched).
double make_peak_safe(Waveform& w);

/// 16-bit PCM WAV. Reading accepts mono only; multi-channel files are
/// rejected with a diagnostic since the pipeline stores one speaker per file.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace cueprobe
