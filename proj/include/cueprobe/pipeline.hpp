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

// Batch orchestration behind the command-line tool: session manifests, flat
// key=value run configs, a per-session worker pool and one entry point per
// subcommand. Every output lands under <out>/run-<hash8>/, where the hash
// covers every setting that can change an output byte.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cueprobe/eval.hpp"
#include "cueprobe/manipulate.hpp"
#include "cueprobe/vocoder.hpp"

namespace cueprobe {

enum class Split { kTrain, kVal, kTest };

std::optional<Split> parse_split(const std::string& name);
const char* to_string(Split split);

struct ManifestRow {
  std::string session_id;
  std::array<std::filesystem::path, 2> wav;  // resolved against the manifest
  std::filesystem::path words;
  int fold = 0;  // 0..4
  Split split = Split::kTrain;
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

/// CSV with header session_id,wav_ch0,wav_ch1,words,fold,split. Relative
/// paths are taken from the manifest's directory. (session_id, fold) must be
/// unique so a held-out session may appear once per fold.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path out = "runs";

  std::vector<std::string> conditions;  // empty: the seven table conditions
  std::vector<double> snr_grid;         // defaults to -10..10 step 2.5
  ScoringOptions scoring;
  double min_silence_ms = 200.0;
  double context_s = 1.0;
  double bridge_ms = 100.0;
  MidTurnOptions midturn;
  double prosody_window_s = 2.0;

  VocoderConfig vocoder;
  MeanScope scope = MeanScope::kIpu;
  std::vector<std::filesystem::path> music;
  std::string mix_condition = "noise-pi";
  double mix_snr_db = 0.0;
  double mix_clean_fraction = 0.75;

  std::filesystem::path streams_dir;  // score, report
  std::filesystem::path hyp_dir;      // wer

  RunConfig();

  /// Throws Error on an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  /// Sorted key=value lines, excluding out and workers.
  std::string canonical() const;
  /// 16 hex digits of a stable hash of canonical().
  std::string hash() const;
  std::filesystem::path run_dir() const;
};

/// '#' starts a comment; blank lines are skipped; each other line is key=value.
RunConfig read_config(const std::filesystem::path& path);

/// "a,b,c" or "lo:hi:step" (inclusive).
std::vector<double> parse_snr_grid(const std::string& text);

/// Conditions to run. A noise that needs an SNR and is listed without one is
/// expanded over the grid.
std::vector<std::string> expand_conditions(const RunConfig& cfg);

struct SessionError {
  std::string session_id;
  std::string message;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::size_t succeeded = 0;
  std::vector<SessionError> errors;

  int exit_code() const { return errors.empty() ? 0 : 1; }
};

/// Runs fn(i) for i in [0, n) on `workers` threads. Exceptions are caught per
/// item and returned by index; scheduling never changes what fn sees.
std::vector<std::optional<std::string>> run_parallel(
    std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

RunResult run_analyze(const Manifest& m, const RunConfig& cfg);
RunResult run_manipulate(const Manifest& m, const RunConfig& cfg);
RunResult run_events(const Manifest& m, const RunConfig& cfg);
RunResult run_labels(const Manifest& m, const RunConfig& cfg);
RunResult run_score(const Manifest& m, const RunConfig& cfg);
RunResult run_report(const Manifest& m, const RunConfig& cfg);
RunResult run_wer(const Manifest& m, const RunConfig& cfg);
RunResult run_prosody_train(const Manifest& m, const RunConfig& cfg);

/// Synthetic corpus -> manipulate -> events -> labels -> stub streams ->
/// score -> report -> wer -> prosody-train, all under <cfg.out>/selftest.
RunResult run_selftest(const RunConfig& cfg);

}  // namespace cueprobe
