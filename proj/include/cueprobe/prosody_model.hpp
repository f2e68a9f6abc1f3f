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

// Prosody-only shift/hold predictor: trailing-window pitch and intensity
// features, a standardised logistic classifier, and a synthetic dyad corpus
// with planted turn-final cues for self-checks.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cueprobe/audio.hpp"
#include "cueprobe/dialog_events.hpp"
#include "cueprobe/vocoder.hpp"

namespace cueprobe {

inline constexpr std::size_t kProsodyFeatureCount = 9;

/// Feature order. Pitch is in semitones re the speaker's median voiced F0,
/// intensity in dB re the speaker's median active frame level.
const std::array<const char*, kProsodyFeatureCount>& prosody_feature_names();

struct ProsodyFeatures {
  // voiced_ratio, f0_mean_st, f0_slope_st_per_s, f0_final_delta_st,
  // intensity_mean_db, intensity_slope_db_per_s, intensity_final_delta_db,
  // pause_fraction, covered_s
  std::array<double, kProsodyFeatureCount> values{};
};

/// Per-channel reference levels; computed once per session.
struct SpeakerStats {
  double f0_median_hz = 0.0;    // 0 when the channel never voices
  double level_median_db = 0.0;
};

/// Frame level in dB from the envelope.
std::vector<double> frame_level_db(const VocoderFrames& frames);

SpeakerStats speaker_stats(const VocoderFrames& frames);

/// Features of `channel` over the frames in [t - window, t). The window is
/// clipped at the session start; covered_s reports what remained. Final-delta
/// features compare the last 200 ms with the rest of the window and are 0 when
/// either part is empty. Throws Error when the window misses the frames.
ProsodyFeatures extract_features(const VocoderFrames& frames, const SpeakerStats& stats,
                                 const VadTrack& vad, int channel, double t_s,
                                 double window_s = 2.0);
ProsodyFeatures extract_features(const VocoderFrames& frames, const VadTrack& vad,
                                 int channel, double t_s, double window_s = 2.0);

struct TrainOptions {
  double learning_rate = 0.1;
  double l2 = 1e-3;
  int epochs = 500;
  // Weights start at zero and training is full batch, so the seed is carried
  // only as a record and for callers that split data.
  std::uint64_t seed = 0;
};

struct LogisticModel {
  std::vector<double> mean;   // per-feature, from training data
  std::vector<double> scale;  // per-feature std; 1 where the feature is constant
  std::vector<double> weights;
  double bias = 0.0;
  TrainOptions options;

  std::size_t features() const { return weights.size(); }
};

/// Mean log loss plus l2/2 * |w|^2 (bias unpenalised) over rows already
/// standardised. Writes the gradient to grad_w / grad_b.
double logistic_loss(const std::vector<std::vector<double>>& z,
                     const std::vector<bool>& labels, const std::vector<double>& w,
                     double b, double l2, std::vector<double>* grad_w = nullptr,
                     double* grad_b = nullptr);

/// Full-batch gradient descent. `loss_trace`, when given, receives the loss
/// before each epoch and after the last. Throws Error on single-class or
/// ragged input.
LogisticModel train_logistic(const std::vector<std::vector<double>>& x,
                             const std::vector<bool>& labels, const TrainOptions& options = {},
                             std::vector<double>* loss_trace = nullptr);

double predict(const LogisticModel& model, const std::vector<double>& x);
double predict(const LogisticModel& model, const ProsodyFeatures& f);

void write_model(std::ostream& os, const LogisticModel& model);
LogisticModel read_model(std::istream& is);
void write_model(const std::filesystem::path& path, const LogisticModel& model);
LogisticModel read_model(const std::filesystem::path& path);

/// One labelled turn-end sample.
struct FeatureRow {
  std::string session_id;
  int channel = 0;
  double t_s = 0.0;
  bool shift = false;
  ProsodyFeatures features;
};

/// Rows for every event of a session, taken on the outgoing speaker's channel
/// at the silence start.
std::vector<FeatureRow> session_features(const std::string& session_id,
                                         const std::array<VocoderFrames, 2>& frames,
                                         const VadTrack& vad,
                                         const std::vector<TurnEvent>& events,
                                         double window_s = 2.0);

void write_features_csv(std::ostream& os, const std::vector<FeatureRow>& rows,
                        bool header = true);

// --- synthetic corpus -------------------------------------------------------

struct CueCorpusOptions {
  int events_per_session = 10;
  double shift_fraction = 0.5;  // rounded per session; exact over the corpus
  double turn_min_s = 2.6;
  double turn_max_s = 4.0;
  double cue_s = 0.5;           // planted region before each turn end
  double f0_fall_min_st = 5.0;  // shift cue: F0 fall and level drop
  double f0_fall_max_st = 7.0;
  double level_drop_min_db = 7.0;
  double level_drop_max_db = 10.0;
};

struct SynthSession {
  std::string id;
  std::array<Waveform, 2> channels;
  std::vector<WordToken> words;
  std::vector<TurnEvent> events;  // planted labels
  double duration_s = 0.0;
};

/// Two-speaker sessions built from vocoder frames and synthesised. Pre-shift
/// turn ends fall in pitch and level; pre-hold ends stay flat. All timing is
/// on the 10 ms grid so word-derived activity recovers the events exactly.
std::vector<SynthSession> synth_cue_corpus(int n_sessions, std::uint64_t seed,
                                           const CueCorpusOptions& options = {});

}  // namespace cueprobe
