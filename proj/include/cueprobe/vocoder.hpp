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

// Source-filter vocoder: F0, spectral envelope and aperiodicity on a fixed
// frame grid, and resynthesis from (possibly edited) frames.
//
// Frame grid: frame i is centred on sample i * hop, hop = frame_period * fs.
// A signal of N samples has ceil(N / hop) frames. Analysis windows that run
// past either end of the signal read the signal reflected about its first or
// last sample.
//
// Envelope units: power per bin, normalised so that white noise of variance
// s^2 has a flat envelope equal to s^2. The signal power of a frame is the
// mean of the envelope over the full FFT circle (see envelope_power()).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cueprobe/audio.hpp"

namespace cueprobe {

struct VocoderConfig {
  double frame_period_ms = 10.0;
  std::size_t fft_size = 512;
  double analysis_window_s = 30.0;
  double f0_floor_hz = 60.0;
  double f0_ceil_hz = 400.0;
  double energy_floor_db = -60.0;

  // Estimator knobs.
  double voicing_threshold = 0.45;   // on the normalised autocorrelation peak
  double octave_cost = 1.0;          // DP cost per octave of F0 change
  double voicing_transition_cost = 0.1;
  double lag_weight = 0.1;           // mild preference for short lags
  double silence_threshold = 0.03;   // frame RMS re chunk maximum; below
                                     // about 1.4x this, voicing gets harder
  double pitch_band_hz = 1500.0;     // low-pass applied before correlation
  int min_voiced_frames = 3;         // shorter voiced runs become unvoiced
  double voiced_aperiodicity_floor = 0.05;
  double voiced_aperiodicity_ceil = 0.5;

  /// Throws Error on an inconsistent configuration.
  void validate() const;
  std::size_t hop_samples(int sample_rate_hz) const;
};

/// Bins with power below this are "floor"; silent frames carry it in every
/// bin. It sits 20 dB under energy_floor_db so that resynthesised silence
/// never registers as active.
double floor_power(const VocoderConfig& cfg);

struct F0Track {
  std::vector<double> f0_hz;  // 0 = unvoiced
  double frame_period_ms = 10.0;

  std::size_t size() const { return f0_hz.size(); }
};

struct SpectralFrames {
  std::size_t fft_size = 512;
  std::vector<std::vector<double>> power;  // [frame][fft_size / 2 + 1]

  std::size_t size() const { return power.size(); }
  std::size_t bins() const { return fft_size / 2 + 1; }
};

struct AperiodicityFrames {
  std::vector<double> ratio;  // [0, 1], 1 = fully noise excited

  std::size_t size() const { return ratio.size(); }
};

struct VocoderFrames {
  F0Track f0;
  SpectralFrames envelope;
  AperiodicityFrames aperiodicity;
  VocoderConfig config;
  int sample_rate_hz = kPipelineSampleRate;

  std::size_t frame_count() const { return f0.size(); }
  void validate() const;
};

std::size_t frame_count_for(std::size_t n_samples, const VocoderConfig& cfg,
                            int sample_rate_hz);

/// Signal power represented by one envelope frame.
double envelope_power(std::span<const double> envelope, std::size_t fft_size);

/// Hann-weighted RMS over fft_size samples centred on each frame: the
/// intensity contour used throughout the pipeline.
std::vector<double> frame_rms(const Waveform& w, const VocoderConfig& cfg);
std::vector<double> frame_rms_db(const Waveform& w, const VocoderConfig& cfg);

/// Frames whose RMS exceeds energy_floor_db.
std::vector<bool> active_frames(const Waveform& w, const VocoderConfig& cfg);

F0Track estimate_f0(const Waveform& w, const VocoderConfig& cfg);
SpectralFrames estimate_envelope(const Waveform& w, const F0Track& f0,
                                 const VocoderConfig& cfg);
AperiodicityFrames estimate_aperiodicity(const Waveform& w, const F0Track& f0,
                                         const VocoderConfig& cfg);

/// estimate_f0 + estimate_envelope + estimate_aperiodicity.
VocoderFrames analyze(const Waveform& w, const VocoderConfig& cfg = {});

/// Pulse train at F0 blended with Gaussian noise by aperiodicity, shaped by
/// the envelope (zero phase) and overlap-added. Output has
/// frame_count * hop samples and is peak-safe.
Waveform synthesize(const VocoderFrames& frames, std::uint64_t seed = 0);

void write_frames(const std::filesystem::path& path,
                  const VocoderFrames& frames);
VocoderFrames read_frames(const std::filesystem::path& path);

}  // namespace cueprobe
