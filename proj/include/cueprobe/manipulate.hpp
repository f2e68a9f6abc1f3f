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

// Cue-isolating manipulations: pitch and intensity flattening, prosody-matched
// (pink-envelope) noise, background noise construction and SNR mixing.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cueprobe/audio.hpp"
#include "cueprobe/dialog_events.hpp"
#include "cueprobe/vocoder.hpp"

namespace cueprobe {

/// Half-open range of vocoder frames over which a mean is taken.
struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// What "the utterance" means when flattening to a mean.
enum class MeanScope {
  kIpu,     // one mean per inter-pausal unit of the channel
  kWindow,  // one mean per analysis window (30 s by default)
  kWhole,   // one mean for the whole signal
};

std::optional<MeanScope> parse_mean_scope(const std::string& name);
const char* to_string(MeanScope scope);

/// IPU segments mapped to the vocoder frame grid (frame i sits at i * hop).
std::vector<FrameRange> ipu_ranges(std::span<const Segment> ipus,
                                   std::size_t n_frames, const VocoderConfig& cfg,
                                   int sample_rate_hz = kPipelineSampleRate);
std::vector<FrameRange> window_ranges(std::size_t n_frames,
                                      const VocoderConfig& cfg,
                                      int sample_rate_hz = kPipelineSampleRate);

/// Group index per frame. Frames inside ranges[k] get group k; frames covered
/// by no range share one extra group. Empty `ranges` puts every frame in
/// group 0.
std::vector<std::size_t> scope_groups(std::span<const FrameRange> ranges,
                                      std::size_t n_frames);

/// Voiced frames take the mean voiced F0 of their scope group.
VocoderFrames flatten_pitch(const VocoderFrames& frames,
                            std::span<const FrameRange> scopes = {});

/// Time-domain gain driving every active frame's RMS (dB) to the mean active
/// RMS of its scope group. Gains are smoothed over smoothing_ms among active
/// frames; samples nearest an inactive frame are left untouched.
struct IntensityOptions {
  double smoothing_ms = 50.0;
  int refine_passes = 20;  // extra measure-and-correct passes
};

Waveform flatten_intensity(const Waveform& w, const VocoderConfig& cfg,
                           std::span<const FrameRange> scopes = {},
                           const IntensityOptions& options = {});

/// Per-sample gain (linear) that moves frame_rms(w) toward target_db on the
/// active frames. Exposed for tests.
std::vector<double> contour_gain(const Waveform& w, const VocoderConfig& cfg,
                                 std::span<const double> target_db,
                                 const std::vector<bool>& active,
                                 double smoothing_ms);

/// Unit-RMS noise with a 1/f power spectrum above 20 Hz.
Waveform pink_noise(double duration_s, int sample_rate_hz, std::uint64_t seed);

/// Pink power shape on fft bins: 1/f above 20 Hz, held at 1/20 below.
std::vector<double> pink_envelope(std::size_t fft_size, int sample_rate_hz);

enum class PmVariant { kMatchBoth, kFlatPitch, kFlatIntensity };

Waveform prosody_matched_noise(const VocoderFrames& frames,
                               const Waveform& original, PmVariant variant,
                               std::uint64_t seed,
                               std::span<const FrameRange> scopes = {});

Waveform make_babble(std::span<const Waveform> sources, int n_overlap,
                     double duration_s, std::uint64_t seed);

/// Excerpt of one randomly chosen source, looped to duration, unit RMS.
Waveform make_speech_noise(std::span<const Waveform> sources, double duration_s,
                           std::uint64_t seed);

struct MixResult {
  Waveform mixed;
  double noise_gain = 1.0;    // applied to the looped noise before summing
  double output_scale = 1.0;  // peak-safety rescale of the sum
};

/// Sample mask covering the frames flagged in `active` (frame i spans
/// [i*hop - hop/2, i*hop + hop/2)).
std::vector<bool> sample_mask(const std::vector<bool>& active, std::size_t n_samples,
                              std::size_t hop);

/// Loops or truncates noise to the speech length.
std::vector<double> fit_length(std::span<const double> noise, std::size_t n);

MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db,
                     const std::vector<bool>& active, const VocoderConfig& cfg = {});

/// SNR over the active samples of a speech/noise pair already scaled.
double realized_snr_db(std::span<const double> speech,
                       std::span<const double> noise,
                       const std::vector<bool>& sample_active);

// --- conditions ----------------------------------------------------------

enum class Keep { kPreserved, kRemoved };
enum class Contour { kPreserved, kFlattened };
enum class NoiseKind { kNone, kProsodyMatched, kBabble, kSpeech, kMusicFile };

const char* to_string(NoiseKind kind);

struct ConditionSpec {
  Keep lexical = Keep::kPreserved;
  Contour pitch = Contour::kPreserved;
  Contour intensity = Contour::kPreserved;
  NoiseKind noise = NoiseKind::kNone;
  std::optional<double> snr_db;
  std::uint64_t seed = 0;

  /// Throws Error naming the broken rule.
  void validate() const;
};

/// clean, noise-pi, noise-p, noise-i, flat-p, flat-i, flat-pi, babble,
/// speech-noise, music. "name@snr" attaches an SNR; babble, speech-noise and
/// music need one, noise-* with an SNR are mixed with the original speech.
ConditionSpec parse_condition(const std::string& text, std::uint64_t seed = 0);
std::string condition_name(const ConditionSpec& spec);

/// The seven lexical/pitch/intensity cells, in table order.
std::vector<std::string> table_conditions();

struct NoiseBank {
  std::vector<Waveform> babble_sources;
  std::vector<Waveform> speech_sources;  // utterances from other sessions
  std::vector<Waveform> music;
  int babble_overlap = 6;
};

struct ManipulateOptions {
  VocoderConfig vocoder;
  MeanScope scope = MeanScope::kIpu;
  double bridge_ms = 100.0;
};

/// One output per channel; channels are processed independently with
/// seeds derived from spec.seed and the channel index.
std::array<Waveform, 2> apply_condition(const std::array<Waveform, 2>& channels,
                                        std::span<const WordToken> words,
                                        const ConditionSpec& spec,
                                        const NoiseBank& bank = {},
                                        const ManipulateOptions& options = {});

/// Single-channel form; `ipus` are that channel's segments (used for kIpu).
Waveform apply_condition_channel(const Waveform& w, std::span<const Segment> ipus,
                                 const ConditionSpec& spec, const NoiseBank& bank,
                                 const ManipulateOptions& options);

// --- mixed training ------------------------------------------------------

struct MixAssignment {
  std::string session_id;
  std::string condition;  // "clean" or the manipulated condition name
  std::optional<double> snr_db;
  std::uint64_t seed = 0;
};

struct MixPlan {
  std::vector<MixAssignment> sessions;  // input order
  double clean_fraction = 0.75;
  std::uint64_t seed = 0;

  std::size_t manipulated_count() const;
};

MixPlan plan_mixed_training(std::span<const std::string> sessions,
                            double clean_fraction, std::uint64_t seed,
                            const std::string& condition = "noise-pi",
                            double snr_db = 0.0);

void write_mix_plan_csv(std::ostream& os, const MixPlan& plan);

}  // namespace cueprobe
