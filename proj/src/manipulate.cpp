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

#include "cueprobe/manipulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cueprobe/fft.hpp"
#include "cueprobe/seed.hpp"

namespace cueprobe {

namespace {

constexpr double kPinkCornerHz = 20.0;

struct NamedCell {
  const char* name;
  Keep lexical;
  Contour pitch;
  Contour intensity;
  NoiseKind noise;
};

// Canonical names; the noise-* rows describe the pure (no SNR) form.
constexpr NamedCell kCells[] = {
    {"clean", Keep::kPreserved, Contour::kPreserved, Contour::kPreserved,
     NoiseKind::kNone},
    {"noise-pi", Keep::kRemoved, Contour::kPreserved, Contour::kPreserved,
     NoiseKind::kProsodyMatched},
    {"noise-p", Keep::kRemoved, Contour::kPreserved, Contour::kFlattened,
     NoiseKind::kProsodyMatched},
    {"noise-i", Keep::kRemoved, Contour::kFlattened, Contour::kPreserved,
     NoiseKind::kProsodyMatched},
    {"flat-p", Keep::kPreserved, Contour::kFlattened, Contour::kPreserved,
     NoiseKind::kNone},
    {"flat-i", Keep::kPreserved, Contour::kPreserved, Contour::kFlattened,
     NoiseKind::kNone},
    {"flat-pi", Keep::kPreserved, Contour::kFlattened, Contour::kFlattened,
     NoiseKind::kNone},
};

struct NamedNoise {
  const char* name;
  NoiseKind kind;
};

constexpr NamedNoise kNoises[] = {
    {"babble", NoiseKind::kBabble},
    {"speech-noise", NoiseKind::kSpeech},
    {"music", NoiseKind::kMusicFile},
};

std::vector<double> group_means(std::span<const double> values,
                                const std::vector<bool>& use,
                                std::span<const std::size_t> groups) {
  const std::size_t n_groups =
      groups.empty() ? 0 : *std::max_element(groups.begin(), groups.end()) + 1;
  std::vector<double> sum(n_groups, 0.0), count(n_groups, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!use[i]) continue;
    sum[groups[i]] += values[i];
    count[groups[i]] += 1.0;
  }
  for (std::size_t g = 0; g < n_groups; ++g) {
    sum[g] = count[g] > 0.0 ? sum[g] / count[g] : 0.0;
  }
  return sum;
}

std::size_t smoothing_half_width(double smoothing_ms, const VocoderConfig& cfg) {
  const double frames = smoothing_ms / cfg.frame_period_ms;
  return static_cast<std::size_t>(std::max(0.0, std::round((frames - 1.0) / 2.0)));
}

// Repeatedly measures frame RMS and corrects toward the target. The first
// pass does most of the work; later passes mop up the coupling between
// neighbouring frames introduced by the overlapping RMS windows.
void match_contour(Waveform& x, const VocoderConfig& cfg,
                   std::span<const double> target_db, const std::vector<bool>& active,
                   double smoothing_ms, int passes) {
  for (int p = 0; p < passes; ++p) {
    const auto gain = contour_gain(x, cfg, target_db, active, smoothing_ms);
    for (std::size_t s = 0; s < x.size(); ++s) x.samples[s] *= gain[s];
  }
}

void check_sources(std::span<const Waveform> sources, const char* what) {
  for (const auto& s : sources) {
    if (s.empty()) throw Error(std::string(what) + ": empty noise source");
    require_pipeline_rate(s, what);
  }
}

Waveform looped_excerpt(const Waveform& src, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);
  const std::size_t offset = pick(rng);
  Waveform out;
  out.sample_rate_hz = src.sample_rate_hz;
  out.samples.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    out.samples[s] = src.samples[(offset + s) % src.size()];
  }
  const double r = rms(out.samples);
  if (!(r > 0.0)) throw Error("noise source is silent over the excerpt");
  for (double& v : out.samples) v /= r;
  return out;
}

std::size_t samples_for(double duration_s, int fs) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw Error("duration must be positive and finite");
  }
  return static_cast<std::size_t>(std::llround(duration_s * fs));
}

std::vector<FrameRange> scopes_for(const Waveform& w, std::span<const Segment> ipus,
                                   const ManipulateOptions& opt) {
  const std::size_t n = frame_count_for(w.size(), opt.vocoder, w.sample_rate_hz);
  switch (opt.scope) {
    case MeanScope::kIpu:
      return ipu_ranges(ipus, n, opt.vocoder, w.sample_rate_hz);
    case MeanScope::kWindow:
      return window_ranges(n, opt.vocoder, w.sample_rate_hz);
    case MeanScope::kWhole:
      break;
  }
  return {};
}

}  // namespace

std::optional<MeanScope> parse_mean_scope(const std::string& name) {
  if (name == "ipu") return MeanScope::kIpu;
  if (name == "window") return MeanScope::kWindow;
  if (name == "whole") return MeanScope::kWhole;
  return std::nullopt;
}

const char* to_string(MeanScope scope) {
  switch (scope) {
    case MeanScope::kIpu: return "ipu";
    case MeanScope::kWindow: return "window";
    case MeanScope::kWhole: return "whole";
  }
  return "?";
}

std::vector<FrameRange> ipu_ranges(std::span<const Segment> ipus,
                                   std::size_t n_frames, const VocoderConfig& cfg,
                                   int sample_rate_hz) {
  const double frame_s =
      static_cast<double>(cfg.hop_samples(sample_rate_hz)) / sample_rate_hz;
  std::vector<FrameRange> out;
  for (const auto& seg : ipus) {
    auto to_frame = [&](double t) {
      const double f = std::ceil(t / frame_s - 1e-9);
      return static_cast<std::size_t>(
          std::clamp(f, 0.0, static_cast<double>(n_frames)));
    };
    const FrameRange r{to_frame(seg.start_s), to_frame(seg.end_s)};
    if (r.begin < r.end) out.push_back(r);
  }
  return out;
}

std::vector<FrameRange> window_ranges(std::size_t n_frames, const VocoderConfig& cfg,
                                      int sample_rate_hz) {
  const double frame_s =
      static_cast<double>(cfg.hop_samples(sample_rate_hz)) / sample_rate_hz;
  const auto per = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.analysis_window_s / frame_s)));
  std::vector<FrameRange> out;
  for (std::size_t b = 0; b < n_frames; b += per) {
    out.push_back({b, std::min(b + per, n_frames)});
  }
  return out;
}

std::vector<std::size_t> scope_groups(std::span<const FrameRange> ranges,
                                      std::size_t n_frames) {
  std::vector<std::size_t> groups(n_frames, ranges.size());
  if (ranges.empty()) {
    std::fill(groups.begin(), groups.end(), 0);
    return groups;
  }
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    for (std::size_t i = ranges[k].begin; i < std::min(ranges[k].end, n_frames); ++i) {
      groups[i] = k;
    }
  }
  return groups;
}

VocoderFrames flatten_pitch(const VocoderFrames& frames,
                            std::span<const FrameRange> scopes) {
  frames.validate();
  VocoderFrames out = frames;
  auto& f0 = out.f0.f0_hz;
  std::vector<bool> voiced(f0.size());
  for (std::size_t i = 0; i < f0.size(); ++i) voiced[i] = f0[i] > 0.0;
  if (std::none_of(voiced.begin(), voiced.end(), [](bool v) { return v; })) {
    spdlog::info("flatten_pitch: no voiced frames, track left unchanged");
    return out;
  }
  const auto groups = scope_groups(scopes, f0.size());
  const auto means = group_means(f0, voiced, groups);
  for (std::size_t i = 0; i < f0.size(); ++i) {
    if (voiced[i]) f0[i] = means[groups[i]];
  }
  return out;
}

std::vector<double> contour_gain(const Waveform& w, const VocoderConfig& cfg,
                                 std::span<const double> target_db,
                                 const std::vector<bool>& active,
                                 double smoothing_ms) {
  const auto level = frame_rms_db(w, cfg);
  const std::size_t n = level.size();
  if (target_db.size() != n || active.size() != n) {
    throw Error("contour_gain: target/active length does not match frame count");
  }
  std::vector<double> raw(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (active[i]) raw[i] = target_db[i] - level[i];
  }
  // Triangular average over active neighbours only. A triangle has a
  // non-negative frequency response, so repeated passes cannot amplify any
  // component of the residual (a boxcar's negative lobes do).
  const std::size_t half = smoothing_half_width(smoothing_ms, cfg);
  std::vector<double> gain_db(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    double acc = 0.0, weight = 0.0;
    const std::size_t lo = i >= half ? i - half : 0;
    for (std::size_t j = lo; j <= std::min(i + half, n - 1); ++j) {
      if (!active[j]) continue;
      const std::size_t d = j > i ? j - i : i - j;
      const double wj = static_cast<double>(half + 1 - d);
      acc += wj * raw[j];
      weight += wj;
    }
    gain_db[i] = acc / weight;
  }

  const std::size_t hop = cfg.hop_samples(w.sample_rate_hz);
  std::vector<double> gain(w.size(), 1.0);
  for (std::size_t s = 0; s < w.size(); ++s) {
    const std::size_t i0 = std::min(s / hop, n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double frac =
        static_cast<double>(s - i0 * hop) / static_cast<double>(hop);
    const std::size_t nearest = frac < 0.5 ? i0 : i1;
    if (!active[nearest]) continue;
    double db = gain_db[nearest];
    if (active[i0] && active[i1]) db = gain_db[i0] + frac * (gain_db[i1] - gain_db[i0]);
    gain[s] = std::pow(10.0, db / 20.0);
  }
  return gain;
}

Waveform flatten_intensity(const Waveform& w, const VocoderConfig& cfg,
                           std::span<const FrameRange> scopes,
                           const IntensityOptions& options) {
  require_pipeline_rate(w, "flatten_intensity");
  Waveform out = w;
  if (w.empty()) return out;
  const auto level = frame_rms_db(w, cfg);
  std::vector<bool> active(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    active[i] = level[i] > cfg.energy_floor_db;
  }
  if (std::none_of(active.begin(), active.end(), [](bool v) { return v; })) {
    spdlog::info("flatten_intensity: no active frames, signal left unchanged");
    return out;
  }
  const auto groups = scope_groups(scopes, level.size());
  const auto means = group_means(level, active, groups);
  std::vector<double> target(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) target[i] = means[groups[i]];
  match_contour(out, cfg, target, active, options.smoothing_ms,
                1 + std::max(0, options.refine_passes));
  const double g = make_peak_safe(out);
  if (g != 1.0) spdlog::info("flatten_intensity: rescaled by {:.6f} for peak safety", g);
  return out;
}

Waveform pink_noise(double duration_s, int sample_rate_hz, std::uint64_t seed) {
  if (sample_rate_hz <= 0) throw Error("pink_noise: sample rate must be positive");
  const std::size_t n = samples_for(duration_s, sample_rate_hz);
  const std::size_t m = next_power_of_two(std::max<std::size_t>(n, 2));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> white(m);
  for (double& v : white) v = gauss(rng);
  auto spec = rfft(white, m);
  spec[0] = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * sample_rate_hz / static_cast<double>(m);
    spec[k] /= std::sqrt(std::max(f, kPinkCornerHz));
  }
  auto x = irfft(spec, m);
  x.resize(n);
  Waveform out;
  out.sample_rate_hz = sample_rate_hz;
  const double r = rms(x);
  for (double& v : x) v /= r;
  out.samples = std::move(x);
  return out;
}

std::vector<double> pink_envelope(std::size_t fft_size, int sample_rate_hz) {
  std::vector<double> p(fft_size / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f =
        static_cast<double>(k) * sample_rate_hz / static_cast<double>(fft_size);
    p[k] = 1.0 / std::max(f, kPinkCornerHz);
  }
  return p;
}

Waveform prosody_matched_noise(const VocoderFrames& frames,
                               const Waveform& original, PmVariant variant,
                               std::uint64_t seed,
                               std::span<const FrameRange> scopes) {
  frames.validate();
  require_pipeline_rate(original, "prosody_matched_noise");
  const VocoderConfig& cfg = frames.config;
  const std::size_t n = frames.frame_count();
  if (n != frame_count_for(original.size(), cfg, original.sample_rate_hz) ||
      frames.sample_rate_hz != original.sample_rate_hz) {
    throw Error(fmt::format(
        "prosody_matched_noise: {} frames do not match {} samples of audio", n,
        original.size()));
  }
  Waveform out;
  out.sample_rate_hz = original.sample_rate_hz;
  if (n == 0) return out;

  VocoderFrames work =
      variant == PmVariant::kFlatPitch ? flatten_pitch(frames, scopes) : frames;
  // Pink shape at each frame's original power so the gain stage only has to
  // make small corrections.
  const auto pink = pink_envelope(cfg.fft_size, original.sample_rate_hz);
  const double pink_power = envelope_power(pink, cfg.fft_size);
  for (auto& row : work.envelope.power) {
    const double scale = envelope_power(row, cfg.fft_size) / pink_power;
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = pink[k] * scale;
  }
  out = synthesize(work, seed);
  out.samples.resize(original.size());

  auto target = frame_rms_db(original, cfg);
  std::vector<bool> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = target[i] > cfg.energy_floor_db;
  if (variant == PmVariant::kFlatIntensity) {
    const auto groups = scope_groups(scopes, n);
    const auto means = group_means(target, active, groups);
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) target[i] = means[groups[i]];
    }
  }
  const IntensityOptions opt;
  match_contour(out, cfg, target, active, opt.smoothing_ms, 1 + opt.refine_passes);
  const double g = make_peak_safe(out);
  if (g != 1.0) {
    spdlog::info("prosody_matched_noise: rescaled by {:.6f} for peak safety", g);
  }
  return out;
}

Waveform make_babble(std::span<const Waveform> sources, int n_overlap,
                     double duration_s, std::uint64_t seed) {
  if (n_overlap < 1) throw Error("make_babble: n_overlap must be at least 1");
  if (sources.size() < static_cast<std::size_t>(n_overlap)) {
    throw Error(fmt::format("make_babble: {} talkers requested but only {} sources",
                            n_overlap, sources.size()));
  }
  check_sources(sources, "make_babble");
  const int fs = sources.front().sample_rate_hz;
  const std::size_t n = samples_for(duration_s, fs);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Waveform out;
  out.sample_rate_hz = fs;
  out.samples.assign(n, 0.0);
  for (int k = 0; k < n_overlap; ++k) {
    const auto part = looped_excerpt(sources[order[static_cast<std::size_t>(k)]], n, rng);
    for (std::size_t s = 0; s < n; ++s) out.samples[s] += part.samples[s];
  }
  const double r = rms(out.samples);
  if (!(r > 0.0)) throw Error("make_babble: sources cancel to silence");
  for (double& v : out.samples) v /= r;
  return out;
}

Waveform make_speech_noise(std::span<const Waveform> sources, double duration_s,
                           std::uint64_t seed) {
  if (sources.empty()) throw Error("make_speech_noise: no source utterances");
  check_sources(sources, "make_speech_noise");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
  const auto& src = sources[pick(rng)];
  return looped_excerpt(src, samples_for(duration_s, src.sample_rate_hz), rng);
}

std::vector<bool> sample_mask(const std::vector<bool>& active, std::size_t n_samples,
                              std::size_t hop) {
  std::vector<bool> mask(n_samples, false);
  if (active.empty()) return mask;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t frame = std::min((s + hop / 2) / hop, active.size() - 1);
    mask[s] = active[frame];
  }
  return mask;
}

std::vector<double> fit_length(std::span<const double> noise, std::size_t n) {
  if (noise.empty()) throw Error("noise signal is empty");
  std::vector<double> out(n);
  for (std::size_t s = 0; s < n; ++s) out[s] = noise[s % noise.size()];
  return out;
}

double realized_snr_db(std::span<const double> speech,
                       std::span<const double> noise,
                       const std::vector<bool>& sample_active) {
  double ps = 0.0, pn = 0.0;
  for (std::size_t s = 0; s < speech.size(); ++s) {
    if (!sample_active[s]) continue;
    ps += speech[s] * speech[s];
    pn += noise[s] * noise[s];
  }
  return 10.0 * std::log10(ps / pn);
}

MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db,
                     const std::vector<bool>& active, const VocoderConfig& cfg) {
  if (speech.sample_rate_hz != noise.sample_rate_hz) {
    throw Error(fmt::format("mix_at_snr: speech at {} Hz, noise at {} Hz",
                            speech.sample_rate_hz, noise.sample_rate_hz));
  }
  if (!std::isfinite(snr_db)) throw Error("mix_at_snr: SNR must be finite");
  const std::size_t n = speech.size();
  if (active.size() != frame_count_for(n, cfg, speech.sample_rate_hz)) {
    throw Error("mix_at_snr: active mask does not match the speech frame count");
  }
  const auto looped = fit_length(noise.samples, n);
  const auto mask = sample_mask(active, n, cfg.hop_samples(speech.sample_rate_hz));
  double ps = 0.0, pn = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!mask[s]) continue;
    ps += speech.samples[s] * speech.samples[s];
    pn += looped[s] * looped[s];
  }
  if (!(ps > 0.0)) throw Error("mix_at_snr: speech is silent over the active mask");
  if (!(pn > 0.0)) throw Error("mix_at_snr: noise is silent over the active span");

  MixResult r;
  r.noise_gain = std::sqrt(ps / pn) * std::pow(10.0, -snr_db / 20.0);
  r.mixed.sample_rate_hz = speech.sample_rate_hz;
  r.mixed.samples.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    r.mixed.samples[s] = speech.samples[s] + r.noise_gain * looped[s];
  }
  r.output_scale = make_peak_safe(r.mixed);
  if (r.output_scale != 1.0) {
    spdlog::info("mix_at_snr: mixture rescaled by {:.6f} for peak safety",
                 r.output_scale);
  }
  return r;
}

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kProsodyMatched: return "prosody_matched";
    case NoiseKind::kBabble: return "babble";
    case NoiseKind::kSpeech: return "speech";
    case NoiseKind::kMusicFile: return "music_file";
  }
  return "?";
}

void ConditionSpec::validate() const {
  // Prosody-matched noise alone replaces the speech, so it needs no SNR;
  // every other noise is mixed and needs one.
  const bool needs_snr = noise != NoiseKind::kNone && noise != NoiseKind::kProsodyMatched;
  const bool allows_snr = noise != NoiseKind::kNone;
  if ((needs_snr && !snr_db) || (!allows_snr && snr_db)) {
    throw Error(fmt::format("condition: noise={} {} an SNR", to_string(noise),
                            snr_db ? "does not take" : "requires"));
  }
  if (snr_db && !std::isfinite(*snr_db)) throw Error("condition: SNR must be finite");
  const bool pure_pm = noise == NoiseKind::kProsodyMatched && !snr_db;
  if ((lexical == Keep::kRemoved) != pure_pm) {
    throw Error("condition: lexical content is removed exactly for pure "
                "prosody-matched noise");
  }
  if (noise == NoiseKind::kProsodyMatched && pitch == Contour::kFlattened &&
      intensity == Contour::kFlattened) {
    throw Error("condition: prosody-matched noise must keep pitch or intensity");
  }
}

ConditionSpec parse_condition(const std::string& text, std::uint64_t seed) {
  std::string name = text;
  std::optional<double> snr;
  if (const auto at = text.find('@'); at != std::string::npos) {
    name = text.substr(0, at);
    const std::string value = text.substr(at + 1);
    try {
      std::size_t used = 0;
      snr = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw Error(fmt::format("condition '{}': bad SNR '{}'", text, value));
    }
  }
  ConditionSpec spec;
  spec.seed = seed;
  spec.snr_db = snr;
  bool found = false;
  for (const auto& cell : kCells) {
    if (name != cell.name) continue;
    spec.lexical = cell.lexical;
    spec.pitch = cell.pitch;
    spec.intensity = cell.intensity;
    spec.noise = cell.noise;
    if (spec.noise == NoiseKind::kProsodyMatched && snr) {
      spec.lexical = Keep::kPreserved;  // mixed with the original speech
    }
    found = true;
  }
  if (!found) {
    // <noise>[+flat-p|+flat-i|+flat-pi]
    const auto plus = name.find('+');
    const std::string base = name.substr(0, plus);
    const std::string flat = plus == std::string::npos ? "" : name.substr(plus + 1);
    for (const auto& nn : kNoises) {
      if (base == nn.name) {
        spec.noise = nn.kind;
        found = true;
      }
    }
    if (found && !flat.empty()) {
      if (flat == "flat-p" || flat == "flat-pi") spec.pitch = Contour::kFlattened;
      if (flat == "flat-i" || flat == "flat-pi") spec.intensity = Contour::kFlattened;
      if (flat != "flat-p" && flat != "flat-i" && flat != "flat-pi") found = false;
    }
  }
  if (!found) throw Error(fmt::format("unknown condition '{}'", text));
  spec.validate();
  return spec;
}

std::string condition_name(const ConditionSpec& spec) {
  spec.validate();
  std::string name;
  if (spec.noise == NoiseKind::kNone || spec.noise == NoiseKind::kProsodyMatched) {
    const Keep lexical = spec.noise == NoiseKind::kProsodyMatched ? Keep::kRemoved
                                                                  : Keep::kPreserved;
    for (const auto& cell : kCells) {
      if (cell.noise == spec.noise && cell.lexical == lexical &&
          cell.pitch == spec.pitch && cell.intensity == spec.intensity) {
        name = cell.name;
      }
    }
  } else {
    for (const auto& nn : kNoises) {
      if (nn.kind == spec.noise) name = nn.name;
    }
    const bool fp = spec.pitch == Contour::kFlattened;
    const bool fi = spec.intensity == Contour::kFlattened;
    if (fp || fi) name += fp && fi ? "+flat-pi" : (fp ? "+flat-p" : "+flat-i");
  }
  if (spec.snr_db) name += fmt::format("@{:g}", *spec.snr_db);
  return name;
}

std::vector<std::string> table_conditions() {
  std::vector<std::string> out;
  for (const auto& cell : kCells) out.emplace_back(cell.name);
  return out;
}

Waveform apply_condition_channel(const Waveform& w, std::span<const Segment> ipus,
                                 const ConditionSpec& spec, const NoiseBank& bank,
                                 const ManipulateOptions& options) {
  spec.validate();
  require_pipeline_rate(w, "apply_condition");
  const VocoderConfig& cfg = options.vocoder;
  const bool flat_p = spec.pitch == Contour::kFlattened;
  const bool flat_i = spec.intensity == Contour::kFlattened;
  if (spec.noise == NoiseKind::kNone && !flat_p && !flat_i) return w;
  if (w.empty()) return w;
  const auto scopes = scopes_for(w, ipus, options);

  if (spec.noise == NoiseKind::kProsodyMatched) {
    const PmVariant variant = flat_p   ? PmVariant::kFlatPitch
                              : flat_i ? PmVariant::kFlatIntensity
                                       : PmVariant::kMatchBoth;
    const auto pm = prosody_matched_noise(analyze(w, cfg), w, variant,
                                          derive_seed(spec.seed, "pm"), scopes);
    if (!spec.snr_db) return pm;
    return mix_at_snr(w, pm, *spec.snr_db, active_frames(w, cfg), cfg).mixed;
  }

  Waveform x = w;
  if (flat_p) {
    x = synthesize(flatten_pitch(analyze(x, cfg), scopes),
                   derive_seed(spec.seed, "synth"));
    x.samples.resize(w.size());
  }
  if (flat_i) x = flatten_intensity(x, cfg, scopes);
  if (spec.noise == NoiseKind::kNone) return x;

  const double duration = w.duration_s();
  const auto noise_seed = derive_seed(spec.seed, "noise");
  Waveform noise;
  switch (spec.noise) {
    case NoiseKind::kBabble:
      noise = make_babble(bank.babble_sources, bank.babble_overlap, duration,
                          noise_seed);
      break;
    case NoiseKind::kSpeech:
      noise = make_speech_noise(bank.speech_sources, duration, noise_seed);
      break;
    case NoiseKind::kMusicFile: {
      if (bank.music.empty()) throw Error("apply_condition: no music files supplied");
      check_sources(bank.music, "music");
      std::mt19937_64 rng(noise_seed);
      std::uniform_int_distribution<std::size_t> pick(0, bank.music.size() - 1);
      noise = bank.music[pick(rng)];  // used as-is, looped by the mixer
      break;
    }
    default:
      break;
  }
  return mix_at_snr(x, noise, *spec.snr_db, active_frames(x, cfg), cfg).mixed;
}

std::array<Waveform, 2> apply_condition(const std::array<Waveform, 2>& channels,
                                        std::span<const WordToken> words,
                                        const ConditionSpec& spec,
                                        const NoiseBank& bank,
                                        const ManipulateOptions& options) {
  spec.validate();
  std::array<Waveform, 2> out;
  for (int c = 0; c < 2; ++c) {
    const auto ipus = merge_words(words, c, options.bridge_ms);
    ConditionSpec channel_spec = spec;
    channel_spec.seed = derive_seed(spec.seed, fmt::format("channel{}", c));
    out[static_cast<std::size_t>(c)] = apply_condition_channel(
        channels[static_cast<std::size_t>(c)], ipus, channel_spec, bank, options);
  }
  return out;
}

std::size_t MixPlan::manipulated_count() const {
  return static_cast<std::size_t>(std::count_if(
      sessions.begin(), sessions.end(),
      [](const MixAssignment& a) { return a.condition != "clean"; }));
}

MixPlan plan_mixed_training(std::span<const std::string> sessions,
                            double clean_fraction, std::uint64_t seed,
                            const std::string& condition, double snr_db) {
  if (sessions.empty()) throw Error("plan_mixed_training: empty session list");
  if (!(clean_fraction > 0.0 && clean_fraction < 1.0)) {
    throw Error(fmt::format(
        "plan_mixed_training: clean fraction {} is not strictly between 0 and 1",
        clean_fraction));
  }
  std::set<std::string> seen;
  for (const auto& id : sessions) {
    if (!seen.insert(id).second) {
      throw Error("plan_mixed_training: duplicate session id '" + id + "'");
    }
  }
  const std::string manipulated = fmt::format("{}@{:g}", condition, snr_db);
  parse_condition(manipulated);  // reject unknown names up front

  const std::size_t n = sessions.size();
  const auto n_manip = static_cast<std::size_t>(
      std::llround((1.0 - clean_fraction) * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ha = derive_seed(seed, sessions[a]);
    const auto hb = derive_seed(seed, sessions[b]);
    return ha != hb ? ha < hb : sessions[a] < sessions[b];
  });

  MixPlan plan;
  plan.clean_fraction = clean_fraction;
  plan.seed = seed;
  plan.sessions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    plan.sessions[i].session_id = sessions[i];
    plan.sessions[i].condition = "clean";
    plan.sessions[i].seed = derive_seed(seed, sessions[i]);
  }
  for (std::size_t k = 0; k < n_manip; ++k) {
    auto& a = plan.sessions[order[k]];
    a.condition = condition;
    a.snr_db = snr_db;
  }
  return plan;
}

void write_mix_plan_csv(std::ostream& os, const MixPlan& plan) {
  os << "session_id,condition,snr_db,seed\n";
  for (const auto& a : plan.sessions) {
    os << a.session_id << ',' << a.condition << ','
       << (a.snr_db ? fmt::format("{:g}", *a.snr_db) : std::string()) << ','
       << a.seed << '\n';
  }
}

}  // namespace cueprobe
