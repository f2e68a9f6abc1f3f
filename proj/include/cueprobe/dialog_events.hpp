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

// Turn-taking events from two-channel word timings.
//
// Activity is held at 100 Hz: frame j covers [j/100, (j+1)/100) seconds.
// Future-activity labels run at 20 Hz with 40 bins of 50 ms (a 2 s horizon).

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cueprobe {

struct WordToken {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  int channel = 0;  // 0 or 1
};

/// Inter-pausal unit: one channel's speech after bridging short gaps.
struct Segment {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct VadTrack {
  static constexpr double kFrameRateHz = 100.0;

  std::array<std::vector<bool>, 2> active;
  double duration_s = 0.0;

  std::size_t frames() const { return active[0].size(); }
  bool speaking(int channel, std::size_t frame) const {
    return active[static_cast<std::size_t>(channel)][frame];
  }
};

/// Merged segments of one channel; gaps <= bridge_ms are closed. Throws Error
/// naming the offending pair when two tokens on the channel overlap.
std::vector<Segment> merge_words(std::span<const WordToken> words, int channel,
                                 double bridge_ms = 100.0);

/// Session duration defaults to the last word end.
VadTrack words_to_vad(std::span<const WordToken> words, double bridge_ms = 100.0,
                      std::optional<double> duration_s = std::nullopt);

enum class TurnKind { kShift, kHold };

const char* to_string(TurnKind kind);

struct TurnEvent {
  TurnKind kind = TurnKind::kHold;
  double silence_start_s = 0.0;
  double silence_end_s = 0.0;
  int prev_speaker = 0;
  int next_speaker = 0;

  friend bool operator==(const TurnEvent&, const TurnEvent&) = default;
};

/// Events at mutual silences longer than min_silence_ms that have exactly one
/// speaker, without overlap, for context_s on both sides.
std::vector<TurnEvent> extract_events(const VadTrack& vad,
                                      double min_silence_ms = 200.0,
                                      double context_s = 1.0);

struct MidTurnPoint {
  double t_s = 0.0;
  int speaker = 0;

  friend bool operator==(const MidTurnPoint&, const MidTurnPoint&) = default;
};

struct MidTurnOptions {
  double margin_s = 2.0;
  double stride_s = 1.0;
  bool cap_to_shifts = true;  // keep at most as many points as shifts
  std::uint64_t seed = 0;     // subsample when capping
};

std::vector<MidTurnPoint> sample_midturn(const VadTrack& vad,
                                         std::span<const TurnEvent> events,
                                         const MidTurnOptions& options = {});

struct FutureActivityLabels {
  static constexpr double kFrameRateHz = 20.0;
  static constexpr std::size_t kBins = 40;

  // bits[frame][channel] bit k: channel active in (t + k*50ms, t + (k+1)*50ms]
  std::vector<std::array<std::array<bool, kBins>, 2>> bits;
  std::vector<bool> valid;  // horizon stays inside the session

  std::size_t frames() const { return bits.size(); }
};

FutureActivityLabels future_activity_labels(const VadTrack& vad);

// --- I/O --------------------------------------------------------------------

/// One JSON object per line: {"text", "start", "end", "channel"}.
std::vector<WordToken> read_words_jsonl(const std::filesystem::path& path);
/// CTM: <file> <channel> <start> <duration> <word> [conf]. Channel is A/B or
/// the 1-based 1/2 of the CTM convention.
std::vector<WordToken> read_words_ctm(const std::filesystem::path& path);
/// Dispatches on extension: .ctm is CTM, anything else JSON lines.
std::vector<WordToken> read_words(const std::filesystem::path& path);
void write_words_jsonl(const std::filesystem::path& path,
                       std::span<const WordToken> words);

void write_events_csv(std::ostream& os, const std::string& session_id,
                      std::span<const TurnEvent> events, bool header = true);
void write_midturn_csv(std::ostream& os, const std::string& session_id,
                       std::span<const MidTurnPoint> points, bool header = true);

void write_labels(const std::filesystem::path& path,
                  const FutureActivityLabels& labels);
FutureActivityLabels read_labels(const std::filesystem::path& path);

}  // namespace cueprobe
