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

// Synthetic signals for tests. Everything here is built by direct additive
// synthesis so it stays independent of the vocoder under test.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "cueprobe/audio.hpp"

namespace cueprobe::testing {

inline constexpr int kFs = kPipelineSampleRate;

inline Waveform sine(double freq_hz, double seconds, double amplitude = 0.5,
                     double phase = 0.0) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(std::lround(seconds * kFs)));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz *
                                            static_cast<double>(i) / kFs +
                                        phase);
  }
  return w;
}

inline Waveform white_noise(double seconds, double stddev, std::uint64_t seed) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(std::lround(seconds * kFs)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, stddev);
  for (double& v : w.samples) v = g(rng);
  return w;
}

inline Waveform silence(double seconds) {
  Waveform w;
  w.samples.assign(static_cast<std::size_t>(std::lround(seconds * kFs)), 0.0);
  return w;
}

inline Waveform add(const Waveform& a, const Waveform& b) {
  Waveform out = a;
  for (std::size_t i = 0; i < out.size() && i < b.size(); ++i) {
    out.samples[i] += b.samples[i];
  }
  return out;
}

inline Waveform concat(std::initializer_list<Waveform> parts) {
  Waveform out;
  for (const auto& p : parts) {
    out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  }
  return out;
}

/// Formant-shaped magnitude response, used to colour harmonic fixtures.
struct Vowel {
  double f1, f2, f3;
};

inline double vowel_gain(const Vowel& v, double f) {
  auto peak = [f](double centre, double bw) {
    const double d = (f - centre) / bw;
    return 1.0 / std::sqrt(1.0 + d * d);
  };
  return 0.05 + peak(v.f1, 80.0) + 0.7 * peak(v.f2, 120.0) +
         0.4 * peak(v.f3, 160.0);
}

inline const std::vector<Vowel>& vowels() {
  static const std::vector<Vowel> v = {{730, 1090, 2440}, {270, 2290, 3010},
                                       {300, 870, 2240},  {530, 1840, 2480},
                                       {570, 840, 2410},  {660, 1720, 2410}};
  return v;
}

/// Additive harmonic signal. `f0(t)` in Hz (<= 0 means silence for that
/// sample), `level_db(t)` is the target RMS in dBFS, `vowel_at(t)` picks
/// the formant colouring. Harmonics stop below 7.5 kHz.
inline Waveform harmonic(double seconds, const std::function<double(double)>& f0,
                         const std::function<double(double)>& level_db,
                         const std::function<Vowel(double)>& vowel_at) {
  Waveform w;
  const auto n = static_cast<std::size_t>(std::lround(seconds * kFs));
  w.samples.assign(n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kFs;
    const double pitch = f0(t);
    if (pitch <= 0.0) continue;
    phase += 2.0 * std::numbers::pi * pitch / kFs;
    const Vowel v = vowel_at(t);
    double acc = 0.0, norm = 0.0;
    for (int h = 1; h * pitch < 7500.0; ++h) {
      const double g = vowel_gain(v, h * pitch);
      acc += g * std::sin(h * phase);
      norm += 0.5 * g * g;
    }
    const double target = std::pow(10.0, level_db(t) / 20.0);
    w.samples[i] = target * acc / std::sqrt(norm);
  }
  return w;
}

/// Harmonic signal at one vowel with sinusoidal vibrato.
inline Waveform vibrato_vowel(double seconds, double centre_hz,
                              double depth_hz, double rate_hz,
                              double level_db = -20.0, Vowel v = {730, 1090, 2440}) {
  return harmonic(
      seconds,
      [=](double t) {
        return centre_hz + depth_hz * std::sin(2.0 * std::numbers::pi * rate_hz * t);
      },
      [=](double) { return level_db; }, [=](double) { return v; });
}

/// Flat-spectrum harmonic pulse train with sinusoidal vibrato.
inline Waveform pulse_train_vibrato(double seconds, double centre_hz,
                                    double depth_hz, double rate_hz,
                                    double level_db = -20.0) {
  Waveform w;
  const auto n = static_cast<std::size_t>(std::lround(seconds * kFs));
  w.samples.assign(n, 0.0);
  double phase = 0.0;
  const double target = std::pow(10.0, level_db / 20.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kFs;
    const double pitch =
        centre_hz + depth_hz * std::sin(2.0 * std::numbers::pi * rate_hz * t);
    phase += 2.0 * std::numbers::pi * pitch / kFs;
    double acc = 0.0;
    int count = 0;
    for (int h = 1; h * pitch < 7500.0; ++h, ++count) acc += std::cos(h * phase);
    w.samples[i] = target * acc / std::sqrt(0.5 * count);
  }
  return w;
}

/// Speech-like fixture: voiced syllables of changing vowels grouped into
/// phrases. Pitch is continuous within a phrase and declines across it; each
/// pause starts a new phrase at a fresh pitch. Syllables carry their own
/// intensity contour.
inline Waveform speech_like(double seconds, double base_f0, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Syllable {
    double start, end, f0_start, f0_end, level_db;
    Vowel vowel;
  };
  std::vector<Syllable> syl;
  double t = 0.15;
  double f0 = base_f0 * (1.0 + 0.3 * u(rng));
  while (t < seconds - 0.3) {
    const double len = 0.18 + 0.2 * u(rng);
    const double f_start = f0;
    const double f_end = f_start * (0.82 + 0.26 * u(rng));
    const double level = -30.0 + 12.0 * u(rng);
    const auto& vs = vowels();
    syl.push_back({t, std::min(t + len, seconds - 0.1), f_start, f_end, level,
                   vs[static_cast<std::size_t>(u(rng) * vs.size()) % vs.size()]});
    t += len;
    f0 = std::max(f_end, 0.75 * base_f0);
    if (u(rng) < 0.3) {
      t += 0.12 + 0.1 * u(rng);
      f0 = base_f0 * (1.0 + 0.3 * u(rng));
    }
  }
  auto find = [syl](double x) -> const Syllable* {
    for (const auto& s : syl) {
      if (x >= s.start && x < s.end) return &s;
    }
    return nullptr;
  };
  return harmonic(
      seconds,
      [find](double x) {
        const auto* s = find(x);
        if (!s) return 0.0;
        const double a = (x - s->start) / (s->end - s->start);
        return s->f0_start + a * (s->f0_end - s->f0_start);
      },
      [find](double x) {
        const auto* s = find(x);
        if (!s) return -200.0;
        const double a = (x - s->start) / (s->end - s->start);
        // Short raised-cosine on/off ramps inside each syllable.
        const double ramp = std::min({1.0, a * 8.0, (1.0 - a) * 8.0});
        return s->level_db + 20.0 * std::log10(std::max(ramp, 1e-3));
      },
      [find](double x) {
        const auto* s = find(x);
        return s ? s->vowel : Vowel{500, 1500, 2500};
      });
}

}  // namespace cueprobe::testing
