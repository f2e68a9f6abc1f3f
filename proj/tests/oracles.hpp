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

// Measurement oracles for manipulation tests. Written directly from the
// definitions, without the library's FFT or statistics helpers.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "cueprobe/audio.hpp"
#include "cueprobe/vocoder.hpp"

namespace cueprobe::testing {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Population standard deviation.
inline double stddev(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline std::vector<double> voiced_f0(const VocoderFrames& f) {
  std::vector<double> out;
  for (double v : f.f0.f0_hz) {
    if (v > 0.0) out.push_back(v);
  }
  return out;
}

/// RMSE over frames voiced in both tracks.
inline double voiced_rmse(const F0Track& a, const F0Track& b) {
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a.f0_hz[i] > 0.0 && b.f0_hz[i] > 0.0) {
      const double d = a.f0_hz[i] - b.f0_hz[i];
      se += d * d;
      ++n;
    }
  }
  return n ? std::sqrt(se / static_cast<double>(n)) : 0.0;
}

/// Values of `v` at the flagged frames.
inline std::vector<double> masked(const std::vector<double>& v,
                                  const std::vector<bool>& mask) {
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size() && i < mask.size(); ++i) {
    if (mask[i]) out.push_back(v[i]);
  }
  return out;
}

// Envelope bins used for correlation: about 62 Hz to 7 kHz at 16 kHz/512.
inline constexpr std::size_t kEnvLo = 2;
inline constexpr std::size_t kEnvHi = 224;

/// Mean over active frames of the Pearson correlation between log envelopes.
/// With `detrend`, each frame's least-squares line in log frequency is removed
/// first, so a shared spectral tilt does not count as shared content.
inline double envelope_correlation(const VocoderFrames& a, const VocoderFrames& b,
                                   const std::vector<bool>& active, bool detrend) {
  std::vector<double> x;
  for (std::size_t k = kEnvLo; k < kEnvHi; ++k) x.push_back(std::log(static_cast<double>(k)));
  auto residual = [&](const std::vector<double>& row) {
    std::vector<double> y;
    for (std::size_t k = kEnvLo; k < kEnvHi; ++k) y.push_back(std::log(row[k]));
    if (!detrend) return y;
    const double n = static_cast<double>(y.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      mx += x[j];
      my += y[j];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      sxy += (x[j] - mx) * (y[j] - my);
      sxx += (x[j] - mx) * (x[j] - mx);
    }
    const double slope = sxy / sxx;
    for (std::size_t j = 0; j < y.size(); ++j) y[j] -= my + slope * (x[j] - mx);
    return y;
  };
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (!active[i]) continue;
    acc += pearson(residual(a.envelope.power[i]), residual(b.envelope.power[i]));
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

/// Least-squares slope (dB per decade) of an averaged Hann-windowed
/// periodogram between lo_hz and hi_hz. Direct DFT, 2048-sample segments.
inline double psd_slope_db_per_decade(const Waveform& w, double lo_hz, double hi_hz) {
  constexpr std::size_t kSeg = 2048;
  const double fs = w.sample_rate_hz;
  const auto k_lo = static_cast<std::size_t>(std::ceil(lo_hz * kSeg / fs));
  const auto k_hi = static_cast<std::size_t>(std::floor(hi_hz * kSeg / fs));
  std::vector<double> window(kSeg), power(k_hi + 1, 0.0);
  for (std::size_t n = 0; n < kSeg; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kSeg);
  }
  for (std::size_t start = 0; start + kSeg <= w.size(); start += kSeg) {
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t n = 0; n < kSeg; ++n) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>((k * n) % kSeg) / kSeg;
        const double v = window[n] * w.samples[start + n];
        re += v * std::cos(phase);
        im -= v * std::sin(phase);
      }
      power[k] += re * re + im * im;
    }
  }
  std::vector<double> x, y;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    x.push_back(std::log10(k * fs / kSeg));
    y.push_back(10.0 * std::log10(power[k]));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    mx += x[j];
    my += y[j];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    sxy += (x[j] - mx) * (y[j] - my);
    sxx += (x[j] - mx) * (x[j] - mx);
  }
  return sxy / sxx;
}

/// Power of a single DFT bin frequency (Goertzel-free direct sum).
inline double tone_power(const Waveform& w, double freq_hz) {
  double re = 0.0, im = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    const double phase = 2.0 * std::numbers::pi * freq_hz * n / w.sample_rate_hz;
    re += w.samples[n] * std::cos(phase);
    im -= w.samples[n] * std::sin(phase);
  }
  return (re * re + im * im) / static_cast<double>(w.size() * w.size());
}

}  // namespace cueprobe::testing
