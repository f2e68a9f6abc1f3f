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

// Scoring of turn-shift probability streams at events, threshold tuning,
// classification metrics, WER, fold t-tests and sweep reports.

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

#include "cueprobe/dialog_events.hpp"

namespace cueprobe {

/// Per-frame probability that the next speaker differs from the last one.
/// Frame j covers [j / frame_rate_hz, (j + 1) / frame_rate_hz).
struct ProbabilityStream {
  double frame_rate_hz = 20.0;
  std::vector<double> p_shift;

  std::size_t frames() const { return p_shift.size(); }
  double duration_s() const { return static_cast<double>(p_shift.size()) / frame_rate_hz; }
  /// Throws Error on a bad rate or a value outside [0, 1].
  void validate() const;
};

/// Half-open frame range [begin, end) covering [t - window, t).
struct FrameWindow {
  std::ptrdiff_t begin = 0;
  std::ptrdiff_t end = 0;
};

FrameWindow score_window(double frame_rate_hz, double t_s, double window_ms);

/// Sum of p_shift over the frames in [t - window, t). nullopt when the window
/// leaves the stream; callers drop and count such events.
std::optional<double> score_event(const ProbabilityStream& stream, double t_s,
                                  double window_ms = 200.0);

/// Where the scoring window of a shift/hold event sits: the last window of
/// speech before the silence (default) or the first window of the silence.
enum class Anchor { kPreSilence, kInSilence };

std::optional<Anchor> parse_anchor(const std::string& name);
const char* to_string(Anchor anchor);

/// Window end time for an event under the given anchor.
double anchor_time(const TurnEvent& event, Anchor anchor, double window_ms);

/// S/H-Pred: shift vs hold at events. S-Pred: shift events vs mid-turn points.
enum class MetricSet { kShiftPrediction, kShiftHold };

std::optional<MetricSet> parse_metric_set(const std::string& name);
const char* to_string(MetricSet set);

struct ScoredEvent {
  std::string session_id;
  double t_s = 0.0;       // window end
  double score = 0.0;
  bool shift = false;     // positive class
};

struct ScoringOptions {
  Anchor anchor = Anchor::kPreSilence;
  double window_ms = 200.0;
};

struct SessionScores {
  std::vector<ScoredEvent> events;
  std::size_t dropped = 0;
};

/// Scores one session's events for a metric set. S/H-Pred uses every event;
/// S-Pred uses the shift events and the mid-turn points.
SessionScores score_session(const std::string& session_id,
                            const ProbabilityStream& stream,
                            std::span<const TurnEvent> events,
                            std::span<const MidTurnPoint> midturn, MetricSet set,
                            const ScoringOptions& options = {});

/// Threshold grid {i / 100 * max(scores) : i = 0..100}; a score at or above
/// the threshold predicts shift.
std::vector<double> threshold_grid(std::span<const double> scores);

/// Grid threshold with the highest balanced accuracy; ties go to the
/// smallest threshold. Throws Error unless both classes are present.
double tune_threshold(std::span<const double> scores, const std::vector<bool>& shift);

struct ClassMetrics {
  double f1_weighted = 0.0;
  double f1_hold = 0.0;   // negative class (hold, or mid-turn for S-Pred)
  double f1_shift = 0.0;
  double bal_acc = 0.0;
};

/// Standard definitions with shift as the positive class. Undefined ratios
/// (zero denominators) count as 0; balanced accuracy averages the recall of
/// the classes present in `truth`.
ClassMetrics classification_metrics(const std::vector<bool>& predicted_shift,
                                    const std::vector<bool>& true_shift);

/// Case-folded words with punctuation removed (apostrophes inside words are
/// kept); tokens that end up empty are dropped.
std::vector<std::string> normalize_words(std::span<const std::string> words);
std::vector<std::string> split_words(const std::string& text);

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

/// (S + D + I) / |ref| after normalisation. Unclamped. Throws Error on an
/// empty reference.
double wer(std::span<const std::string> ref, std::span<const std::string> hyp);

enum class TTestKind { kPaired, kWelch };

struct TTestResult {
  TTestKind kind = TTestKind::kPaired;
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  bool degenerate = false;  // zero variance with unequal means
};

/// Paired test when the lists have equal length, Welch otherwise.
TTestResult fold_ttest(std::span<const double> a, std::span<const double> b);

// --- reports ----------------------------------------------------------------

struct ReportRow {
  MetricSet metric_set = MetricSet::kShiftHold;
  std::string condition;
  std::optional<double> snr_db;
  int fold = 0;
  double threshold = 0.0;
  ClassMetrics metrics;
  std::size_t n_shift = 0;
  std::size_t n_hold = 0;
};

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;      // sample standard deviation (n - 1)
  double ci_low = 0.0;   // mean -/+ t(0.975, n - 1) * std / sqrt(n)
  double ci_high = 0.0;
};

Summary summarize(std::span<const double> values);

struct ReportAggregate {
  MetricSet metric_set = MetricSet::kShiftHold;
  std::string condition;
  std::optional<double> snr_db;
  Summary bal_acc;
  Summary f1_weighted;
  Summary f1_hold;
  Summary f1_shift;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<ReportAggregate> aggregates;  // one per (metric set, condition, snr)
  std::size_t dropped = 0;                  // events whose window left the stream
  std::string config_hash;
};

/// Scored events of one (condition, snr, fold) cell.
struct FoldScores {
  std::string condition;
  std::optional<double> snr_db;
  int fold = 0;
  std::vector<ScoredEvent> validation;
  std::vector<ScoredEvent> test;
  std::size_t dropped = 0;
};

/// Tunes each cell's threshold on its validation events and scores its test
/// events. Throws Error when a session appears in both partitions of a cell.
EvalReport build_report(MetricSet set, std::span<const FoldScores> cells,
                        const std::string& config_hash = "");

void write_report_csv(std::ostream& os, const EvalReport& report);
EvalReport read_report_csv(std::istream& is);

/// Concatenates reports; throws Error when their config hashes differ.
EvalReport merge_reports(std::span<const EvalReport> reports);

// --- figure data -----------------------------------------------------------

struct FigurePoint {
  std::string series;  // condition
  double x = 0.0;      // snr_db
  double y = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double y_raw = 0.0;  // before clamping
};

/// Mean balanced accuracy per (condition, snr) with its confidence interval.
/// Rows without an SNR are skipped. Throws Error on an empty report.
std::vector<FigurePoint> figure_from_report(const EvalReport& report, MetricSet set);

struct WerEntry {
  std::string condition;
  double snr_db = 0.0;
  double wer = 0.0;  // unclamped, one value per utterance or fold
};

/// Mean WER per (condition, snr); y is clamped to 1.0, y_raw keeps the mean.
std::vector<FigurePoint> figure_from_wer(std::span<const WerEntry> entries);

void write_figure_csv(std::ostream& os, std::span<const FigurePoint> points,
                      const std::string& metric, const std::string& config_hash);

// --- streams ------------------------------------------------------------------

/// Scalar p_shift from two-channel future-activity probabilities:
/// mean over the horizon of the other channel's probability, renormalised
/// against the last speaker's. probs[frame][channel][bin].
ProbabilityStream shift_stream_from_activity(
    std::span<const std::array<std::array<double, FutureActivityLabels::kBins>, 2>> probs,
    std::span<const int> last_speaker, double frame_rate_hz = 20.0);

/// Last speaker (0/1) at each frame of a stream grid; before anyone speaks,
/// channel 0.
std::vector<int> last_speaker_track(const VadTrack& vad, std::size_t n_frames,
                                    double frame_rate_hz = 20.0);

/// Stub streams for harness checks. kSeparable puts 1 in every shift scoring
/// window and 0 elsewhere; kConstant is 0.5 everywhere; kNoisy draws
/// uniform values, higher inside shift windows.
enum class StubKind { kSeparable, kConstant, kNoisy };

ProbabilityStream stub_stream(double duration_s, std::span<const TurnEvent> events,
                              StubKind kind, std::uint64_t seed,
                              const ScoringOptions& options = {},
                              double frame_rate_hz = 20.0);

/// CSV with header "t_s,p_shift"; the rate comes from the time column.
ProbabilityStream read_stream_csv(const std::filesystem::path& path);
void write_stream_csv(const std::filesystem::path& path, const ProbabilityStream& s);
ProbabilityStream read_stream_sidecar(const std::filesystem::path& path);
void write_stream_sidecar(const std::filesystem::path& path, const ProbabilityStream& s);
/// Dispatches on extension: .csv, anything else the sidecar.
ProbabilityStream read_stream(const std::filesystem::path& path);

}  // namespace cueprobe
