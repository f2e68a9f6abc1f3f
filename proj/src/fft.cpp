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

#include "cueprobe/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cueprobe/audio.hpp"

namespace cueprobe {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::span<std::complex<double>> data, bool inverse) {
  const std::size_t n = data.size();
  if (n <= 1) return;
  if (!is_power_of_two(n)) throw Error("fft: size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> step(std::cos(angle), std::sin(angle));
    const std::size_t half = len / 2;
    // Twiddles for this stage, computed once by recurrence from exact
    // cos/sin every 64 entries to bound drift on long transforms.
    std::vector<std::complex<double>> tw(half);
    for (std::size_t k = 0; k < half; ++k) {
      if (k % 64 == 0) {
        const double a = angle * static_cast<double>(k);
        tw[k] = {std::cos(a), std::sin(a)};
      } else {
        tw[k] = tw[k - 1] * step;
      }
    }
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Written out: std::complex operator* takes a slow NaN-checking path.
        const auto u = data[i + k];
        const auto b = data[i + k + half];
        const std::complex<double> v(b.real() * tw[k].real() - b.imag() * tw[k].imag(),
                                     b.real() * tw[k].imag() + b.imag() * tw[k].real());
        data[i + k] = u + v;
        data[i + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : data) v *= scale;
  }
}

std::vector<std::complex<double>> rfft(std::span<const double> x,
                                       std::size_t n) {
  std::vector<std::complex<double>> buf(n);
  const std::size_t m = std::min(n, x.size());
  for (std::size_t i = 0; i < m; ++i) buf[i] = x[i];
  fft(buf);
  buf.resize(n / 2 + 1);
  return buf;
}

std::vector<double> irfft(std::span<const std::complex<double>> half,
                          std::size_t n) {
  if (half.size() != n / 2 + 1) throw Error("irfft: bin count mismatch");
  std::vector<std::complex<double>> buf(n);
  for (std::size_t k = 0; k <= n / 2; ++k) buf[k] = half[k];
  for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k] = std::conj(half[n - k]);
  fft(buf, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
  return out;
}

}  // namespace cueprobe
