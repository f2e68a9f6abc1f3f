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

// cueprobe: batch front end for analysis, manipulation, event extraction,
// scoring and reporting.
//
// Usage: cueprobe <subcommand> [options]
//   e.g. cueprobe manipulate --manifest sessions.csv --config run.cfg --workers 8
//        cueprobe report --manifest sessions.csv --streams vap_out/ --anchor in-silence
//        cueprobe selftest --out /tmp/cp --seed 3
//
// Exit status: 0 when every session succeeded, 1 when some failed (see the
// log), 2 on a bad command line, manifest or config.

#include <cstdio>
#include <functional>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cueprobe/pipeline.hpp"

namespace {

struct Flags {
  std::string manifest, config, out, conditions, snr_grid, anchor, streams, hyp;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool verbose = false;
};

cueprobe::RunConfig build_config(const Flags& f) {
  cueprobe::RunConfig cfg = f.config.empty() ? cueprobe::RunConfig{}
                                             : cueprobe::read_config(f.config);
  if (f.seed) cfg.set("seed", std::to_string(*f.seed));
  if (f.workers) cfg.set("workers", std::to_string(*f.workers));
  if (!f.out.empty()) cfg.set("out", f.out);
  if (!f.conditions.empty()) cfg.set("conditions", f.conditions);
  if (!f.snr_grid.empty()) cfg.set("snr_grid", f.snr_grid);
  if (!f.anchor.empty()) cfg.set("anchor", f.anchor);
  if (!f.streams.empty()) cfg.set("streams_dir", f.streams);
  if (!f.hyp.empty()) cfg.set("hyp_dir", f.hyp);
  cueprobe::expand_conditions(cfg);  // reject unknown names up front
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("cueprobe"));
  spdlog::set_pattern("%^%l%$ %v");

  CLI::App app{"Prosodic and lexical cue manipulation and turn-taking evaluation"};
  app.require_subcommand(1);
  Flags flags;

  using Runner = std::function<cueprobe::RunResult(const cueprobe::Manifest&,
                                                   const cueprobe::RunConfig&)>;
  const std::vector<std::tuple<std::string, std::string, Runner>> commands = {
      {"analyze", "Vocoder analysis of every channel", cueprobe::run_analyze},
      {"manipulate", "Write each condition's audio per session and channel",
       cueprobe::run_manipulate},
      {"events", "Shift/hold events and mid-turn points from word timings",
       cueprobe::run_events},
      {"labels", "Future voice-activity labels", cueprobe::run_labels},
      {"score", "Per-event scores from probability streams", cueprobe::run_score},
      {"report", "Thresholded fold metrics, aggregates, t-tests and figure data",
       cueprobe::run_report},
      {"wer", "Word error rate of external transcripts", cueprobe::run_wer},
      {"prosody-train", "Train and test the prosody-only classifier",
       cueprobe::run_prosody_train},
  };
  std::map<CLI::App*, Runner> runners;
  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Flat key=value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Global seed");
    sub->add_option("--workers", flags.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out, "Output root; runs land in <out>/run-<hash8>");
    sub->add_option("--conditions", flags.conditions, "Comma-separated condition names");
    sub->add_option("--snr-grid", flags.snr_grid, "SNRs in dB: a,b,c or lo:hi:step");
    sub->add_option("--anchor", flags.anchor, "pre-silence or in-silence");
    sub->add_flag("-v,--verbose", flags.verbose, "Debug logging");
  };
  for (const auto& [name, help, run] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--manifest", flags.manifest, "Session manifest CSV")
        ->required()
        ->check(CLI::ExistingFile);
    add_common(sub);
    if (name == "score" || name == "report") {
      sub->add_option("--streams", flags.streams, "Directory of probability streams");
    }
    if (name == "wer") sub->add_option("--hyp", flags.hyp, "Directory of transcripts");
    runners[sub] = run;
  }
  auto* selftest = app.add_subcommand(
      "selftest", "Synthetic corpus through the whole pipeline with stub predictors");
  add_common(selftest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (flags.verbose) spdlog::set_level(spdlog::level::debug);

  cueprobe::RunConfig cfg;
  cueprobe::Manifest manifest;
  try {
    cfg = build_config(flags);
    if (!selftest->parsed()) manifest = cueprobe::read_manifest(flags.manifest);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }

  try {
    cueprobe::RunResult result;
    if (selftest->parsed()) {
      result = cueprobe::run_selftest(cfg);
    } else {
      for (const auto& [sub, run] : runners) {
        if (sub->parsed()) result = run(manifest, cfg);
      }
    }
    if (!result.errors.empty()) {
      spdlog::error("{} failure(s); first: {}{}", result.errors.size(),
                    result.errors.front().session_id.empty()
                        ? ""
                        : "session " + result.errors.front().session_id + ": ",
                    result.errors.front().message);
    }
    std::printf("%s\n", result.run_dir.string().c_str());
    return result.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
