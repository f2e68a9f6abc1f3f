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

#include "cueprobe/vocoder.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "cueprobe/fft.hpp"
#include "cueprobe/sidecar.hpp"

namespace cueprobe {

namespace {

constexpr std::uint32_t kFramesVersion = 1;
constexpr std::size_t kMaxCandidates = 6;

// x[idx] with the signal mirrored about its first and last samples.
double reflected(std::span<const double> x, long idx) {
  const long n = static_cast<long>(x.size());
  if (n == 1) return x[0];
  if (idx >= 0 && idx < n) return x[static_cast<std::size_t>(idx)];
  const long period = 2 * (n - 1);
  idx %= period;
  if (idx < 0) idx += period;
  if (idx >= n) idx = period - idx;
  return x[static_cast<std::size_t>(idx)];
}

void copy_segment(std::span<const double> x, long start,
                  std::span<double> out) {
  const long n = static_cast<long>(x.size());
  const long len = static_cast<long>(out.size());
  if (start >= 0 && start + len <= n) {
    std::copy_n(x.begin() + start, len, out.begin());
    return;
  }
  for (long i = 0; i < len; ++i) out[i] = reflected(x, start + i);
}

std::vector<double> hann(std::size_t n, bool periodic) {
  std::vector<double> w(n);
  const double denom = periodic ? static_cast<double>(n)
                                : static_cast<double>(n > 1 ? n - 1 : 1);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / denom);
  }
  return w;
}

// Geometry of the normalised cross-correlation used by the F0 and
// aperiodicity estimators.
struct NccfGeometry {
  std::size_t hop;
  std::size_t window;   // correlation length
  std::size_t min_lag;
  std::size_t max_lag;
  std::size_t segment;  // samples read per frame

  NccfGeometry(const VocoderConfig& cfg, int fs) {
    hop = cfg.hop_samples(fs);
    window = static_cast<std::size_t>(std::lround(0.025 * fs));
    min_lag = static_cast<std::size_t>(
        std::max(2.0, std::floor(fs / cfg.f0_ceil_hz)));
    max_lag = static_cast<std::size_t>(std::ceil(fs / cfg.f0_floor_hz));
    segment = window + max_lag + 2;
  }

  long start_of(std::size_t frame) const {
    return static_cast<long>(frame * hop) -
           static_cast<long>((window + max_lag) / 2);
  }
};

// Normalised cross-correlation r[lag] for lag in [0, max_lag + 1]; entries
// below min_lag - 1 are left at zero. Returns the segment RMS.
double nccf(std::span<const double> x, std::size_t frame,
            const NccfGeometry& g, std::vector<double>& seg,
            std::vector<double>& r) {
  seg.resize(g.segment);
  // Edge frames slide their correlation span inward when the signal is long
  // enough; a reflected span would break the periodicity being measured.
  long start = g.start_of(frame);
  const long room = static_cast<long>(x.size()) - static_cast<long>(g.segment);
  if (room >= 0) start = std::clamp(start, 0L, room);
  copy_segment(x, start, seg);
  double mean = 0.0;
  for (double v : seg) mean += v;
  mean /= static_cast<double>(seg.size());
  double total = 0.0;
  for (double& v : seg) {
    v -= mean;
    total += v * v;
  }
  const double seg_rms = std::sqrt(total / static_cast<double>(seg.size()));

  // Both halves of each lagged pair are centred on the frame: the pair for
  // lag L starts (max_lag + 1 - L) / 2 samples into the segment.
  std::vector<double> energy(seg.size() + 1, 0.0);
  for (std::size_t n = 0; n < seg.size(); ++n) {
    energy[n + 1] = energy[n] + seg[n] * seg[n];
  }
  r.assign(g.max_lag + 2, 0.0);
  for (std::size_t lag = g.min_lag - 1; lag <= g.max_lag + 1; ++lag) {
    const std::size_t a0 = (g.max_lag + 1 - lag) / 2;
    const std::size_t b0 = a0 + lag;
    const double ea = energy[a0 + g.window] - energy[a0];
    const double eb = energy[b0 + g.window] - energy[b0];
    double num = 0.0;
    const double* a = seg.data() + a0;
    const double* b = seg.data() + b0;
    for (std::size_t n = 0; n < g.window; ++n) num += a[n] * b[n];
    const double den = std::sqrt(std::max(ea * eb, 0.0));
    r[lag] = den > 1e-20 ? num / den : 0.0;
  }
  return seg_rms;
}

struct Candidate {
  double f0;
  double lag;
  double peak;
};

// Peak value and fractional position of a parabola through r[i-1..i+1].
std::pair<double, double> parabolic(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (std::abs(denom) < 1e-12) return {0.0, mid};
  const double delta = std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
  return {delta, mid - 0.25 * (left - right) * delta};
}

std::vector<Candidate> candidates(const std::vector<double>& r,
                                  const NccfGeometry& g,
                                  const VocoderConfig& cfg, int fs) {
  std::vector<Candidate> out;
  for (std::size_t lag = g.min_lag; lag <= g.max_lag; ++lag) {
    if (r[lag] <= 0.0 || r[lag] < r[lag - 1] || r[lag] <= r[lag + 1]) continue;
    const auto [delta, peak] = parabolic(r[lag - 1], r[lag], r[lag + 1]);
    const double frac_lag = static_cast<double>(lag) + delta;
    const double f0 =
        std::clamp(fs / frac_lag, cfg.f0_floor_hz, cfg.f0_ceil_hz);
    out.push_back({f0, frac_lag, std::min(peak, 1.0)});
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return a.peak > b.peak || (a.peak == b.peak && a.lag < b.lag);
  });
  if (out.size() > kMaxCandidates) out.resize(kMaxCandidates);
  return out;
}

// Viterbi over per-frame voiced candidates plus one unvoiced state.
// `level` is each frame's RMS relative to the loudest frame of the chunk.
double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

// Three-point median inside one voiced run. The ends use a linearly
// extrapolated neighbour, so ramps and steps pass unchanged and only
// single-frame spikes move.
void median_smooth_run(std::span<double> f) {
  const std::size_t n = f.size();
  if (n < 3) return;
  const std::vector<double> in(f.begin(), f.end());
  f[0] = median3(in[0], in[1], 2.0 * in[1] - in[2]);
  for (std::size_t i = 1; i + 1 < n; ++i) f[i] = median3(in[i - 1], in[i], in[i + 1]);
  f[n - 1] = median3(in[n - 1], in[n - 2], 2.0 * in[n - 2] - in[n - 3]);
}

std::vector<double> track_f0(const std::vector<std::vector<Candidate>>& cands,
                             std::span<const double> level,
                             const NccfGeometry& g, const VocoderConfig& cfg) {
  const std::size_t n = cands.size();
  std::vector<double> f0(n, 0.0);
  if (n == 0) return f0;
  const double max_lag = static_cast<double>(g.max_lag);

  auto local_costs = [&](const std::vector<Candidate>& c, double rel) {
    std::vector<double> cost(c.size() + 1);
    for (std::size_t j = 0; j < c.size(); ++j) {
      cost[j] = 1.0 - c[j].peak + cfg.lag_weight * c[j].lag / max_lag;
    }
    // At full level, unvoiced wins over the strongest candidate exactly when
    // its peak is below the voicing threshold. Frames far below the chunk's
    // loudest frame get a stronger unvoiced state (Boersma-style silence
    // rule): their correlation span is dominated by a few onset samples.
    const double best_lag = c.empty() ? 0.0 : c.front().lag;
    const double quiet = std::max(
        0.0, 2.0 - rel * (1.0 + cfg.voicing_threshold) / cfg.silence_threshold);
    cost[c.size()] = 1.0 - cfg.voicing_threshold - quiet +
                     cfg.lag_weight * best_lag / max_lag;
    return cost;
  };

  std::vector<std::vector<double>> acc(n);
  std::vector<std::vector<std::size_t>> back(n);
  acc[0] = local_costs(cands[0], level[0]);
  back[0].assign(acc[0].size(), 0);
  for (std::size_t i = 1; i < n; ++i) {
    const auto& prev = cands[i - 1];
    const auto& cur = cands[i];
    const auto local = local_costs(cur, level[i]);
    acc[i].assign(local.size(), std::numeric_limits<double>::infinity());
    back[i].assign(local.size(), 0);
    for (std::size_t b = 0; b < local.size(); ++b) {
      const bool b_voiced = b < cur.size();
      for (std::size_t a = 0; a < acc[i - 1].size(); ++a) {
        const bool a_voiced = a < prev.size();
        double trans = 0.0;
        if (a_voiced && b_voiced) {
          trans = cfg.octave_cost * std::abs(std::log2(cur[b].f0 / prev[a].f0));
        } else if (a_voiced != b_voiced) {
          trans = cfg.voicing_transition_cost;
        }
        const double total = acc[i - 1][a] + trans;
        if (total < acc[i][b]) {
          acc[i][b] = total;
          back[i][b] = a;
        }
      }
      acc[i][b] += local[b];
    }
  }
  std::size_t state = static_cast<std::size_t>(
      std::min_element(acc[n - 1].begin(), acc[n - 1].end()) -
      acc[n - 1].begin());
  for (std::size_t i = n; i-- > 0;) {
    f0[i] = state < cands[i].size() ? cands[i][state].f0 : 0.0;
    state = back[i][state];
  }
  return f0;
}

// Windowed-sinc low-pass applied before autocorrelation so that pitch
// movement within the correlation span does not decorrelate high harmonics.
std::vector<double> pitch_band(std::span<const double> x, double cutoff_hz,
                               int fs) {
  if (cutoff_hz <= 0.0 || cutoff_hz >= 0.5 * fs) {
    return std::vector<double>(x.begin(), x.end());
  }
  const long half = static_cast<long>(std::lround(2.0 * fs / cutoff_hz));
  std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
  const double fc = cutoff_hz / fs;
  double sum = 0.0;
  for (long k = -half; k <= half; ++k) {
    const double sinc =
        k == 0 ? 2.0 * fc
               : std::sin(2.0 * std::numbers::pi * fc * k) / (std::numbers::pi * k);
    const double win = 0.54 + 0.46 * std::cos(std::numbers::pi * k / half);
    taps[static_cast<std::size_t>(k + half)] = sinc * win;
    sum += sinc * win;
  }
  for (double& t : taps) t /= sum;
  std::vector<double> y(x.size(), 0.0);
  const long n = static_cast<long>(x.size());
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = -half; k <= half; ++k) {
      acc += taps[static_cast<std::size_t>(k + half)] * reflected(x, i - k);
    }
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

void require_aligned(const Waveform& w, const F0Track& f0,
                     const VocoderConfig& cfg, const char* what) {
  const std::size_t expected = frame_count_for(w.size(), cfg, w.sample_rate_hz);
  if (f0.size() != expected) {
    throw Error(std::string(what) + ": F0 track has " +
                std::to_string(f0.size()) + " frames, waveform implies " +
                std::to_string(expected));
  }
}

}  // namespace

void VocoderConfig::validate() const {
  if (!(frame_period_ms > 0.0)) throw Error("frame_period_ms must be > 0");
  if (!is_power_of_two(fft_size) || fft_size < 16) {
    throw Error("fft_size must be a power of two >= 16");
  }
  if (!(f0_floor_hz > 0.0) || !(f0_floor_hz < f0_ceil_hz)) {
    throw Error("require 0 < f0_floor_hz < f0_ceil_hz");
  }
  if (!(analysis_window_s > 0.0)) throw Error("analysis_window_s must be > 0");
  if (!(silence_threshold > 0.0)) throw Error("silence_threshold must be > 0");
  if (min_voiced_frames < 1) throw Error("min_voiced_frames must be >= 1");
  if (!(voiced_aperiodicity_floor >= 0.0) ||
      !(voiced_aperiodicity_floor <= voiced_aperiodicity_ceil) ||
      !(voiced_aperiodicity_ceil <= 1.0)) {
    throw Error("voiced aperiodicity bounds must satisfy 0 <= floor <= ceil <= 1");
  }
}

std::size_t VocoderConfig::hop_samples(int sample_rate_hz) const {
  return static_cast<std::size_t>(
      std::max(1L, std::lround(frame_period_ms * 1e-3 * sample_rate_hz)));
}

double floor_power(const VocoderConfig& cfg) {
  return std::pow(10.0, (cfg.energy_floor_db - 20.0) / 10.0);
}

void VocoderFrames::validate() const {
  config.validate();
  const std::size_t n = f0.size();
  if (envelope.size() != n || aperiodicity.size() != n) {
    throw Error("vocoder frames: F0/envelope/aperiodicity lengths differ (" +
                std::to_string(n) + "/" + std::to_string(envelope.size()) +
                "/" + std::to_string(aperiodicity.size()) + ")");
  }
  if (envelope.fft_size != config.fft_size) {
    throw Error("vocoder frames: envelope fft_size differs from config");
  }
  for (const auto& row : envelope.power) {
    if (row.size() != envelope.bins()) {
      throw Error("vocoder frames: envelope row has wrong bin count");
    }
  }
  if (sample_rate_hz <= 0) throw Error("vocoder frames: bad sample rate");
}

std::size_t frame_count_for(std::size_t n_samples, const VocoderConfig& cfg,
                            int sample_rate_hz) {
  const std::size_t hop = cfg.hop_samples(sample_rate_hz);
  return (n_samples + hop - 1) / hop;
}

double envelope_power(std::span<const double> envelope, std::size_t fft_size) {
  const std::size_t half = fft_size / 2;
  if (envelope.size() != half + 1) throw Error("envelope_power: bin count");
  double acc = envelope[0] + envelope[half];
  for (std::size_t k = 1; k < half; ++k) acc += 2.0 * envelope[k];
  return acc / static_cast<double>(fft_size);
}

std::vector<double> frame_rms(const Waveform& w, const VocoderConfig& cfg) {
  cfg.validate();
  const std::size_t n = frame_count_for(w.size(), cfg, w.sample_rate_hz);
  const std::size_t hop = cfg.hop_samples(w.sample_rate_hz);
  const std::size_t len = cfg.fft_size;
  const auto win = hann(len, false);
  double wsum = 0.0;
  for (double v : win) wsum += v;
  std::vector<double> out(n);
  std::vector<double> seg(len);
  for (std::size_t i = 0; i < n; ++i) {
    copy_segment(w.samples, static_cast<long>(i * hop) - static_cast<long>(len / 2),
                 seg);
    double acc = 0.0;
    for (std::size_t k = 0; k < len; ++k) acc += win[k] * seg[k] * seg[k];
    out[i] = std::sqrt(acc / wsum);
  }
  return out;
}

std::vector<double> frame_rms_db(const Waveform& w, const VocoderConfig& cfg) {
  auto v = frame_rms(w, cfg);
  for (double& x : v) x = amplitude_db(x);
  return v;
}

std::vector<bool> active_frames(const Waveform& w, const VocoderConfig& cfg) {
  const auto db = frame_rms_db(w, cfg);
  std::vector<bool> out(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) out[i] = db[i] > cfg.energy_floor_db;
  return out;
}

F0Track estimate_f0(const Waveform& w, const VocoderConfig& cfg) {
  cfg.validate();
  require_pipeline_rate(w, "estimate_f0");
  F0Track track;
  track.frame_period_ms = cfg.frame_period_ms;
  const std::size_t n = frame_count_for(w.size(), cfg, w.sample_rate_hz);
  if (n == 0) return track;
  const NccfGeometry g(cfg, w.sample_rate_hz);

  const auto band = pitch_band(w.samples, cfg.pitch_band_hz, w.sample_rate_hz);
  const auto full_rms = frame_rms(w, cfg);
  std::vector<std::vector<Candidate>> cands(n);
  std::vector<double> seg, r;
  for (std::size_t i = 0; i < n; ++i) {
    if (amplitude_db(full_rms[i]) <= cfg.energy_floor_db) continue;
    nccf(band, i, g, seg, r);
    cands[i] = candidates(r, g, cfg, w.sample_rate_hz);
  }

  // Dynamic programming per analysis window, windows sharing one frame; the
  // shared frame keeps the earlier window's decision.
  const auto chunk = static_cast<std::size_t>(std::max(
      2L, std::lround(cfg.analysis_window_s * 1000.0 / cfg.frame_period_ms)));
  track.f0_hz.assign(n, 0.0);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t lo = begin == 0 ? 0 : begin - 1;
    const std::size_t hi = std::min(n, begin + chunk);
    std::vector<std::vector<Candidate>> part(cands.begin() + lo,
                                             cands.begin() + hi);
    const double loudest =
        *std::max_element(full_rms.begin() + static_cast<long>(lo),
                          full_rms.begin() + static_cast<long>(hi));
    std::vector<double> level(hi - lo, 0.0);
    if (loudest > 0.0) {
      for (std::size_t i = lo; i < hi; ++i) level[i - lo] = full_rms[i] / loudest;
    }
    const auto f0 = track_f0(part, level, g, cfg);
    for (std::size_t i = begin; i < hi; ++i) track.f0_hz[i] = f0[i - lo];
  }
  // Isolated blips, typically half-window edges of a neighbouring syllable.
  const auto min_run = static_cast<std::size_t>(cfg.min_voiced_frames);
  for (std::size_t i = 0; i < n;) {
    if (track.f0_hz[i] <= 0.0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && track.f0_hz[j] > 0.0) ++j;
    if (j - i < min_run) {
      std::fill(track.f0_hz.begin() + i, track.f0_hz.begin() + j, 0.0);
    } else {
      median_smooth_run(std::span<double>(track.f0_hz).subspan(i, j - i));
    }
    i = j;
  }
  return track;
}

SpectralFrames estimate_envelope(const Waveform& w, const F0Track& f0,
                                 const VocoderConfig& cfg) {
  cfg.validate();
  require_pipeline_rate(w, "estimate_envelope");
  require_aligned(w, f0, cfg, "estimate_envelope");
  const std::size_t n = f0.size();
  const std::size_t fft_n = cfg.fft_size;
  const std::size_t bins = fft_n / 2 + 1;
  const std::size_t hop = cfg.hop_samples(w.sample_rate_hz);
  const double fs = w.sample_rate_hz;
  const double floor_p = floor_power(cfg);
  const auto win = hann(fft_n, false);
  double win_energy = 0.0, win_sum = 0.0;
  for (double v : win) {
    win_energy += v * v;
    win_sum += v;
  }

  SpectralFrames env;
  env.fft_size = fft_n;
  env.power.assign(n, std::vector<double>(bins, floor_p));
  std::vector<double> seg(fft_n);
  for (std::size_t i = 0; i < n; ++i) {
    copy_segment(w.samples,
                 static_cast<long>(i * hop) - static_cast<long>(fft_n / 2), seg);
    double weighted = 0.0;
    for (std::size_t k = 0; k < fft_n; ++k) weighted += win[k] * seg[k] * seg[k];
    if (amplitude_db(std::sqrt(weighted / win_sum)) <= cfg.energy_floor_db) {
      continue;
    }
    for (std::size_t k = 0; k < fft_n; ++k) seg[k] *= win[k];
    const auto spec = rfft(seg, fft_n);
    std::vector<double> raw(bins);
    double raw_mean = 0.0;
    for (std::size_t k = 0; k < bins; ++k) raw[k] = std::norm(spec[k]) / win_energy;
    raw_mean = envelope_power(raw, fft_n);
    if (!(raw_mean > 0.0)) continue;

    // Cepstral smoothing of the log periodogram. The lifter cutoff tracks
    // the pitch period on voiced frames so harmonic ripple is removed.
    const double rel_floor = raw_mean * 1e-12;
    std::vector<std::complex<double>> logspec(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      logspec[k] = std::log(std::max(raw[k], rel_floor));
    }
    auto cep = irfft(logspec, fft_n);
    const double period = f0.f0_hz[i] > 0.0
                              ? fs / std::max(f0.f0_hz[i], cfg.f0_floor_hz)
                              : 0.0;
    const double cutoff = f0.f0_hz[i] > 0.0 ? 0.8 * period : 0.001 * fs;
    const auto keep = static_cast<std::size_t>(
        std::clamp(std::floor(cutoff), 1.0, static_cast<double>(fft_n / 2 - 1)));
    for (std::size_t q = keep + 1; q < fft_n - keep; ++q) cep[q] = 0.0;
    const auto smooth = rfft(cep, fft_n);
    auto& out = env.power[i];
    for (std::size_t k = 0; k < bins; ++k) out[k] = std::exp(smooth[k].real());
    // Liftering in the log domain biases the level; restore frame power.
    const double scale = raw_mean / envelope_power(out, fft_n);
    for (double& v : out) v = std::max(v * scale, 0.0);
  }
  return env;
}

AperiodicityFrames estimate_aperiodicity(const Waveform& w, const F0Track& f0,
                                         const VocoderConfig& cfg) {
  cfg.validate();
  require_pipeline_rate(w, "estimate_aperiodicity");
  require_aligned(w, f0, cfg, "estimate_aperiodicity");
  const NccfGeometry g(cfg, w.sample_rate_hz);
  AperiodicityFrames ap;
  ap.ratio.assign(f0.size(), 1.0);
  const auto band = pitch_band(w.samples, cfg.pitch_band_hz, w.sample_rate_hz);
  std::vector<double> seg, r;
  for (std::size_t i = 0; i < f0.size(); ++i) {
    if (f0.f0_hz[i] <= 0.0) continue;
    nccf(band, i, g, seg, r);
    const double lag = w.sample_rate_hz / f0.f0_hz[i];
    const auto centre = static_cast<std::size_t>(std::clamp(
        std::lround(lag), static_cast<long>(g.min_lag),
        static_cast<long>(g.max_lag)));
    double peak = r[centre];
    if (r[centre] >= r[centre - 1] && r[centre] >= r[centre + 1]) {
      peak = parabolic(r[centre - 1], r[centre], r[centre + 1]).second;
    } else {
      peak = std::max({r[centre - 1], r[centre], r[centre + 1]});
    }
    ap.ratio[i] = std::clamp(1.0 - peak, cfg.voiced_aperiodicity_floor,
                             cfg.voiced_aperiodicity_ceil);
  }
  return ap;
}

VocoderFrames analyze(const Waveform& w, const VocoderConfig& cfg) {
  VocoderFrames frames;
  frames.config = cfg;
  frames.sample_rate_hz = w.sample_rate_hz;
  frames.f0 = estimate_f0(w, cfg);
  frames.envelope = estimate_envelope(w, frames.f0, cfg);
  frames.aperiodicity = estimate_aperiodicity(w, frames.f0, cfg);
  return frames;
}

Waveform synthesize(const VocoderFrames& frames, std::uint64_t seed) {
  frames.validate();
  const VocoderConfig& cfg = frames.config;
  const int fs = frames.sample_rate_hz;
  Waveform out;
  out.sample_rate_hz = fs;
  const std::size_t n_frames = frames.frame_count();
  if (n_frames == 0) return out;
  const std::size_t hop = cfg.hop_samples(fs);
  const std::size_t n = n_frames * hop;
  const auto& f0 = frames.f0.f0_hz;
  const auto& ap = frames.aperiodicity.ratio;

  // Excitation: unit-power pulse train blended with unit-variance noise.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> excitation(n + 1, 0.0);
  double phase = 1.0;  // next voiced sample fires a pulse immediately
  for (std::size_t s = 0; s < n; ++s) {
    const double pos = static_cast<double>(s) / static_cast<double>(hop);
    const auto i0 = std::min(static_cast<std::size_t>(pos), n_frames - 1);
    const std::size_t i1 = std::min(i0 + 1, n_frames - 1);
    const double frac = pos - static_cast<double>(i0);
    const std::size_t nearest = frac < 0.5 ? i0 : i1;
    double pitch = f0[nearest];
    if (f0[i0] > 0.0 && f0[i1] > 0.0) pitch = f0[i0] + frac * (f0[i1] - f0[i0]);
    const double aper = std::clamp(ap[i0] + frac * (ap[i1] - ap[i0]), 0.0, 1.0);
    const double noise = gauss(rng);
    if (pitch > 0.0) {
      const double inc = pitch / fs;
      phase += inc;
      if (phase >= 1.0) {
        phase -= std::floor(phase);
        // Split the pulse between this sample and the previous one by the
        // fractional crossing time.
        const double amp = std::sqrt(fs / pitch) * std::sqrt(1.0 - aper);
        const double late = std::min(phase / inc, 1.0);
        excitation[s] += amp * (1.0 - late);
        if (s > 0) excitation[s - 1] += amp * late;
      }
      excitation[s] += std::sqrt(aper) * noise;
    } else {
      phase = 1.0;
      excitation[s] += noise;
    }
  }

  // Frame-wise zero-phase filtering with periodic Hann windows of 2*hop,
  // which sum to one at hop spacing.
  const std::size_t fft_n = cfg.fft_size;
  const std::size_t seg_len = 2 * hop;
  const std::size_t conv_n = next_power_of_two(seg_len + fft_n);
  const auto win = hann(seg_len, true);
  std::vector<double> y(n, 0.0);
  std::vector<std::complex<double>> half(fft_n / 2 + 1);
  std::vector<double> taps(conv_n);
  std::vector<double> seg(seg_len);
  std::vector<std::complex<double>> hspec;
  const std::vector<double>* prev_env = nullptr;
  for (std::size_t i = 0; i <= n_frames; ++i) {
    const auto& env = frames.envelope.power[std::min(i, n_frames - 1)];
    if (!prev_env || env != *prev_env) {  // runs of silence repeat the floor
      for (std::size_t k = 0; k < half.size(); ++k) {
        half[k] = std::sqrt(std::max(env[k], 0.0));
      }
      const auto h = irfft(half, fft_n);  // zero-phase, circular in fft_n
      std::fill(taps.begin(), taps.end(), 0.0);
      for (std::size_t t = 0; t < fft_n / 2; ++t) taps[t] = h[t];
      for (std::size_t t = fft_n / 2; t < fft_n; ++t) taps[conv_n - fft_n + t] = h[t];
      hspec = rfft(taps, conv_n);
      prev_env = &env;
    }

    const long start = static_cast<long>(i * hop) - static_cast<long>(hop);
    for (std::size_t m = 0; m < seg_len; ++m) {
      const long s = start + static_cast<long>(m);
      seg[m] = (s >= 0 && s < static_cast<long>(n))
                   ? excitation[static_cast<std::size_t>(s)] * win[m]
                   : 0.0;
    }
    auto sspec = rfft(seg, conv_n);
    for (std::size_t k = 0; k < sspec.size(); ++k) sspec[k] *= hspec[k];
    const auto filtered = irfft(sspec, conv_n);
    for (std::size_t m = 0; m < conv_n; ++m) {
      // Indices past seg_len + fft_n/2 are the wrapped negative-time taps.
      const long offset = m < seg_len + fft_n / 2
                              ? static_cast<long>(m)
                              : static_cast<long>(m) - static_cast<long>(conv_n);
      const long s = start + offset;
      if (s >= 0 && s < static_cast<long>(n)) {
        y[static_cast<std::size_t>(s)] += filtered[m];
      }
    }
  }
  out.samples = std::move(y);
  const double gain = make_peak_safe(out);
  if (gain != 1.0) {
    spdlog::info("synthesize: output rescaled by {:.6f} to stay below full scale",
                 gain);
  }
  return out;
}

void write_frames(const std::filesystem::path& path,
                  const VocoderFrames& frames) {
  frames.validate();
  const auto& c = frames.config;
  SidecarWriter out(path, "CPVF", kFramesVersion);
  out.f64(c.frame_period_ms);
  out.u32(static_cast<std::uint32_t>(c.fft_size));
  out.f64(c.analysis_window_s);
  out.f64(c.f0_floor_hz);
  out.f64(c.f0_ceil_hz);
  out.f64(c.energy_floor_db);
  out.f64(c.voicing_threshold);
  out.f64(c.octave_cost);
  out.f64(c.voicing_transition_cost);
  out.f64(c.lag_weight);
  out.f64(c.silence_threshold);
  out.f64(c.pitch_band_hz);
  out.u32(static_cast<std::uint32_t>(c.min_voiced_frames));
  out.f64(c.voiced_aperiodicity_floor);
  out.f64(c.voiced_aperiodicity_ceil);
  out.u32(static_cast<std::uint32_t>(frames.sample_rate_hz));
  out.u64(frames.frame_count());
  out.f64s(frames.f0.f0_hz);
  out.f64s(frames.aperiodicity.ratio);
  for (const auto& row : frames.envelope.power) out.f64s(row);
  out.close();
}

VocoderFrames read_frames(const std::filesystem::path& path) {
  SidecarReader in(path, "CPVF", kFramesVersion);
  VocoderFrames f;
  auto& c = f.config;
  c.frame_period_ms = in.f64();
  c.fft_size = in.u32();
  c.analysis_window_s = in.f64();
  c.f0_floor_hz = in.f64();
  c.f0_ceil_hz = in.f64();
  c.energy_floor_db = in.f64();
  c.voicing_threshold = in.f64();
  c.octave_cost = in.f64();
  c.voicing_transition_cost = in.f64();
  c.lag_weight = in.f64();
  c.silence_threshold = in.f64();
  c.pitch_band_hz = in.f64();
  c.min_voiced_frames = static_cast<int>(in.u32());
  c.voiced_aperiodicity_floor = in.f64();
  c.voiced_aperiodicity_ceil = in.f64();
  c.validate();
  f.sample_rate_hz = static_cast<int>(in.u32());
  const auto n = static_cast<std::size_t>(in.u64());
  f.f0.frame_period_ms = c.frame_period_ms;
  f.f0.f0_hz = in.f64s(n);
  f.aperiodicity.ratio = in.f64s(n);
  f.envelope.fft_size = c.fft_size;
  f.envelope.power.resize(n);
  for (auto& row : f.envelope.power) row = in.f64s(c.fft_size / 2 + 1);
  if (!in.at_end()) throw Error(path.string() + ": trailing bytes in frames");
  f.validate();
  return f;
}

}  // namespace cueprobe
