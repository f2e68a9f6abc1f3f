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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace cueprobe {

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// In-place iterative radix-2 FFT. The inverse is unscaled-free: it divides
/// by n so that ifft(fft(x)) == x.
void fft(std::span<std::complex<double>> data, bool inverse = false);

/// Forward transform of a real sequence zero-padded to `n` (power of two).
/// Returns bins 0..n/2 inclusive.
std::vector<std::complex<double>> rfft(std::span<const double> x,
                                       std::size_t n);

/// Inverse of rfft for a Hermitian half spectrum of n/2+1 bins.
std::vector<double> irfft(std::span<const std::complex<double>> half,
                          std::size_t n);

}  // namespace cueprobe
