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

#include "cueprobe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cueprobe/prosody_model.hpp"
#include "cueprobe/seed.hpp"

namespace cueprobe {
namespace fs = std::filesystem;

std::optional<Split> parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  return std::nullopt;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

namespace {

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(text);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(fmt::format("config: {}='{}' is not a number", key, value));
  }
}

long to_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(fmt::format("config: {}='{}' is not an integer", key, value));
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(fmt::format("config: {}='{}' is not a boolean", key, value));
}

std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

// Base name and SNR of a condition name such as "babble@-7.5".
std::pair<std::string, std::optional<double>> split_condition(const std::string& name) {
  const auto at = name.find('@');
  if (at == std::string::npos) return {name, std::nullopt};
  return {name.substr(0, at), std::stod(name.substr(at + 1))};
}

}  // namespace

// --- manifest ----------------------------------------------------------------

Manifest read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::string line;
  if (!std::getline(is, line) || trim(line) != "session_id,wav_ch0,wav_ch1,words,fold,split") {
    throw Error(path.string() + ": expected header session_id,wav_ch0,wav_ch1,words,fold,split");
  }
  Manifest m;
  std::set<std::pair<std::string, int>> seen;
  std::size_t line_no = 1;
  auto resolve = [&base](const std::string& p) {
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto c = split_on(line, ',');
    const std::string where = fmt::format("{}:{}", path.string(), line_no);
    if (c.size() != 6) throw Error(where + ": expected 6 columns");
    ManifestRow r;
    r.session_id = c[0];
    if (r.session_id.empty() || r.session_id.find_first_of("/\\") != std::string::npos) {
      throw Error(where + ": bad session id '" + r.session_id + "'");
    }
    r.wav = {resolve(c[1]), resolve(c[2])};
    r.words = resolve(c[3]);
    const long fold = to_long("fold", c[4]);
    if (fold < 0 || fold > 4) throw Error(where + ": fold must be 0..4");
    r.fold = static_cast<int>(fold);
    const auto split = parse_split(c[5]);
    if (!split) throw Error(where + ": split must be train, val or test");
    r.split = *split;
    if (!seen.insert({r.session_id, r.fold}).second) {
      throw Error(fmt::format("{}: session '{}' listed twice for fold {}", where,
                              r.session_id, r.fold));
    }
    m.rows.push_back(std::move(r));
  }
  if (m.rows.empty()) throw Error(path.string() + ": no sessions");
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  auto os = open_out(path);
  const fs::path base = path.parent_path();
  auto rel = [&base](const fs::path& p) { return p.lexically_relative(base).generic_string(); };
  os << "session_id,wav_ch0,wav_ch1,words,fold,split\n";
  for (const auto& r : m.rows) {
    os << fmt::format("{},{},{},{},{},{}\n", r.session_id, rel(r.wav[0]), rel(r.wav[1]),
                      rel(r.words), r.fold, to_string(r.split));
  }
}

// --- config --------------------------------------------------------------------

std::vector<double> parse_snr_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    const auto p = split_on(text, ':');
    if (p.size() != 3) throw Error("snr grid: expected lo:hi:step");
    const double lo = to_double("snr_grid", trim(p[0])), hi = to_double("snr_grid", trim(p[1]));
    const double step = to_double("snr_grid", trim(p[2]));
    if (!(step > 0.0) || hi < lo) throw Error("snr grid: need lo <= hi and step > 0");
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  } else {
    for (const auto& v : split_on(text, ',')) out.push_back(to_double("snr_grid", trim(v)));
  }
  if (out.empty()) throw Error("snr grid: empty");
  return out;
}

RunConfig::RunConfig() : snr_grid(parse_snr_grid("-10:10:2.5")) {}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "seed") {
    try {
      seed = std::stoull(value);
    } catch (const std::exception&) {
      throw Error("config: seed must be a non-negative integer");
    }
  } else if (key == "workers") {
    const long w = to_long(key, value);
    if (w < 1) throw Error("config: workers must be at least 1");
    workers = static_cast<int>(w);
  } else if (key == "out") {
    out = value;
  } else if (key == "conditions") {
    conditions.clear();
    for (const auto& c : split_on(value, ',')) {
      if (!trim(c).empty()) conditions.push_back(trim(c));
    }
  } else if (key == "snr_grid") {
    snr_grid = parse_snr_grid(value);
  } else if (key == "anchor") {
    const auto a = parse_anchor(value);
    if (!a) throw Error("config: anchor must be pre-silence or in-silence");
    scoring.anchor = *a;
  } else if (key == "window_ms") {
    scoring.window_ms = to_double(key, value);
  } else if (key == "min_silence_ms") {
    min_silence_ms = to_double(key, value);
  } else if (key == "context_s") {
    context_s = to_double(key, value);
  } else if (key == "bridge_ms") {
    bridge_ms = to_double(key, value);
  } else if (key == "midturn_margin_s") {
    midturn.margin_s = to_double(key, value);
  } else if (key == "midturn_stride_s") {
    midturn.stride_s = to_double(key, value);
  } else if (key == "midturn_cap") {
    midturn.cap_to_shifts = to_bool(key, value);
  } else if (key == "prosody_window_s") {
    prosody_window_s = to_double(key, value);
  } else if (key == "vocoder.frame_period_ms") {
    vocoder.frame_period_ms = to_double(key, value);
  } else if (key == "vocoder.f0_floor_hz") {
    vocoder.f0_floor_hz = to_double(key, value);
  } else if (key == "vocoder.f0_ceil_hz") {
    vocoder.f0_ceil_hz = to_double(key, value);
  } else if (key == "vocoder.energy_floor_db") {
    vocoder.energy_floor_db = to_double(key, value);
  } else if (key == "vocoder.voicing_threshold") {
    vocoder.voicing_threshold = to_double(key, value);
  } else if (key == "vocoder.octave_cost") {
    vocoder.octave_cost = to_double(key, value);
  } else if (key == "scope") {
    const auto s = parse_mean_scope(value);
    if (!s) throw Error("config: scope must be ipu, window or whole");
    scope = *s;
  } else if (key == "music") {
    music.clear();
    for (const auto& p : split_on(value, ',')) {
      if (!trim(p).empty()) music.emplace_back(trim(p));
    }
  } else if (key == "mix_condition") {
    mix_condition = value;
  } else if (key == "mix_snr_db") {
    mix_snr_db = to_double(key, value);
  } else if (key == "mix_clean_fraction") {
    mix_clean_fraction = to_double(key, value);
  } else if (key == "streams_dir") {
    streams_dir = value;
  } else if (key == "hyp_dir") {
    hyp_dir = value;
  } else {
    throw Error("config: unknown key '" + key + "'");
  }
  if (key.rfind("vocoder.", 0) == 0) vocoder.validate();
  if (!(scoring.window_ms > 0.0)) throw Error("config: window_ms must be positive");
}

std::string RunConfig::canonical() const {
  std::vector<std::string> grid, music_paths;
  for (double v : snr_grid) grid.push_back(fmt::format("{}", v));
  for (const auto& p : music) music_paths.push_back(p.generic_string());
  std::map<std::string, std::string> kv = {
      {"seed", fmt::format("{}", seed)},
      {"conditions", join(conditions)},
      {"snr_grid", join(grid)},
      {"anchor", to_string(scoring.anchor)},
      {"window_ms", fmt::format("{}", scoring.window_ms)},
      {"min_silence_ms", fmt::format("{}", min_silence_ms)},
      {"context_s", fmt::format("{}", context_s)},
      {"bridge_ms", fmt::format("{}", bridge_ms)},
      {"midturn_margin_s", fmt::format("{}", midturn.margin_s)},
      {"midturn_stride_s", fmt::format("{}", midturn.stride_s)},
      {"midturn_cap", midturn.cap_to_shifts ? "true" : "false"},
      {"prosody_window_s", fmt::format("{}", prosody_window_s)},
      {"vocoder.frame_period_ms", fmt::format("{}", vocoder.frame_period_ms)},
      {"vocoder.f0_floor_hz", fmt::format("{}", vocoder.f0_floor_hz)},
      {"vocoder.f0_ceil_hz", fmt::format("{}", vocoder.f0_ceil_hz)},
      {"vocoder.energy_floor_db", fmt::format("{}", vocoder.energy_floor_db)},
      {"vocoder.voicing_threshold", fmt::format("{}", vocoder.voicing_threshold)},
      {"vocoder.octave_cost", fmt::format("{}", vocoder.octave_cost)},
      {"scope", to_string(scope)},
      {"music", join(music_paths)},
      {"mix_condition", mix_condition},
      {"mix_snr_db", fmt::format("{}", mix_snr_db)},
      {"mix_clean_fraction", fmt::format("{}", mix_clean_fraction)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const {
  return fmt::format("{:016x}", mix64(stable_hash(canonical())));
}

fs::path RunConfig::run_dir() const { return out / ("run-" + hash().substr(0, 8)); }

RunConfig read_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path.string());
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(fmt::format("{}:{}: expected key=value", path.string(), line_no));
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return cfg;
}

std::vector<std::string> expand_conditions(const RunConfig& cfg) {
  const auto names = cfg.conditions.empty() ? table_conditions() : cfg.conditions;
  std::vector<std::string> out;
  for (const auto& name : names) {
    if (name.find('@') == std::string::npos) {
      bool needs_snr = false;
      try {
        parse_condition(name);
      } catch (const Error&) {
        parse_condition(name + "@0");  // rethrows for an unknown name
        needs_snr = true;
      }
      if (needs_snr) {
        for (double snr : cfg.snr_grid) out.push_back(fmt::format("{}@{:g}", name, snr));
        continue;
      }
    }
    out.push_back(condition_name(parse_condition(name)));
  }
  return out;
}

// --- worker pool -------------------------------------------------------------------

std::vector<std::optional<std::string>> run_parallel(
    std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::optional<std::string>> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    work();
    return errors;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return errors;
}

namespace {

// Indices of the first row of each distinct session id.
std::vector<std::size_t> unique_sessions(const Manifest& m) {
  std::vector<std::size_t> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (seen.insert(m.rows[i].session_id).second) out.push_back(i);
  }
  return out;
}

RunResult start(const RunConfig& cfg, const char* what) {
  RunResult r;
  r.run_dir = cfg.run_dir();
  fs::create_directories(r.run_dir);
  auto os = open_out(r.run_dir / "config.txt");
  os << cfg.canonical();
  spdlog::info("{}: writing to {} (config {})", what, r.run_dir.string(), cfg.hash());
  return r;
}

void collect(RunResult& result, const Manifest& m, const std::vector<std::size_t>& rows,
             const std::vector<std::optional<std::string>>& errors, const char* what) {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& id = m.rows[rows[k]].session_id;
    if (errors[k]) {
      spdlog::error("{}: session {}: {}", what, id, *errors[k]);
      result.errors.push_back({id, *errors[k]});
    } else {
      ++result.succeeded;
    }
  }
  spdlog::info("{}: {} session(s) done, {} failed", what, result.succeeded,
               result.errors.size());
}

struct SessionEvents {
  std::vector<WordToken> words;
  VadTrack vad;
  std::vector<TurnEvent> events;
  std::vector<MidTurnPoint> midturn;
};

SessionEvents session_events(const ManifestRow& row, const RunConfig& cfg) {
  SessionEvents s;
  s.words = read_words(row.words);
  s.vad = words_to_vad(s.words, cfg.bridge_ms);
  s.events = extract_events(s.vad, cfg.min_silence_ms, cfg.context_s);
  auto opts = cfg.midturn;
  opts.seed = derive_seed(cfg.seed, "midturn/" + row.session_id);
  s.midturn = sample_midturn(s.vad, s.events, opts);
  return s;
}

std::array<Waveform, 2> read_channels(const ManifestRow& row) {
  return {read_wav(row.wav[0]), read_wav(row.wav[1])};
}

std::string hash_comment(const RunConfig& cfg) {
  return "# config_hash=" + cfg.hash() + "\n";
}

}  // namespace

// --- subcommands ---------------------------------------------------------------------

RunResult run_analyze(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "analyze");
  const auto rows = unique_sessions(m);
  const auto errors = run_parallel(rows.size(), cfg.workers, [&](std::size_t k) {
    const auto& row = m.rows[rows[k]];
    const auto ch = read_channels(row);
    for (int c = 0; c < 2; ++c) {
      const auto frames = analyze(ch[static_cast<std::size_t>(c)], cfg.vocoder);
      const auto path =
          result.run_dir / "analyze" / fmt::format("{}.ch{}.cpvf", row.session_id, c);
      fs::create_directories(path.parent_path());
      write_frames(path, frames);
    }
  });
  collect(result, m, rows, errors, "analyze");
  return result;
}

RunResult run_manipulate(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "manipulate");
  const auto conditions = expand_conditions(cfg);
  const auto rows = unique_sessions(m);
  bool needs_sources = false, needs_music = false;
  for (const auto& name : conditions) {
    const auto kind = parse_condition(name).noise;
    needs_sources |= kind == NoiseKind::kBabble || kind == NoiseKind::kSpeech;
    needs_music |= kind == NoiseKind::kMusicFile;
  }
  // Other sessions supply babble and speech noise; a session never hears itself.
  std::vector<std::optional<std::array<Waveform, 2>>> audio(rows.size());
  std::vector<Waveform> music;
  if (needs_music) {
    for (const auto& p : cfg.music) music.push_back(read_wav(p));
  }
  if (needs_sources) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      try {
        audio[k] = read_channels(m.rows[rows[k]]);
      } catch (const Error&) {
        // reported when the session itself runs
      }
    }
  }
  ManipulateOptions opts;
  opts.vocoder = cfg.vocoder;
  opts.scope = cfg.scope;
  opts.bridge_ms = cfg.bridge_ms;
  const auto errors = run_parallel(rows.size(), cfg.workers, [&](std::size_t k) {
    const auto& row = m.rows[rows[k]];
    const auto ch = read_channels(row);
    const auto words = read_words(row.words);
    NoiseBank bank;
    bank.music = music;
    if (needs_sources) {
      for (std::size_t j = 0; j < rows.size(); ++j) {
        if (j == k || !audio[j]) continue;
        for (const auto& w : *audio[j]) {
          bank.babble_sources.push_back(w);
          bank.speech_sources.push_back(w);
        }
      }
    }
    for (const auto& name : conditions) {
      const auto spec =
          parse_condition(name, derive_seed(cfg.seed, row.session_id + "/" + name));
      const auto out = apply_condition(ch, words, spec, bank, opts);
      for (int c = 0; c < 2; ++c) {
        const auto path = result.run_dir / "manipulate" /
                          fmt::format("{}.{}.ch{}.wav", row.session_id, name, c);
        fs::create_directories(path.parent_path());
        write_wav(path, out[static_cast<std::size_t>(c)]);
      }
    }
  });
  collect(result, m, rows, errors, "manipulate");

  std::vector<std::string> train;
  for (std::size_t i : rows) {
    if (m.rows[i].split == Split::kTrain) train.push_back(m.rows[i].session_id);
  }
  if (!train.empty()) {
    const auto plan = plan_mixed_training(train, cfg.mix_clean_fraction,
                                          derive_seed(cfg.seed, "mix-plan"),
                                          cfg.mix_condition, cfg.mix_snr_db);
    auto os = open_out(result.run_dir / "mix_plan.csv");
    os << hash_comment(cfg);
    write_mix_plan_csv(os, plan);
  }
  return result;
}

RunResult run_events(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "events");
  const auto rows = unique_sessions(m);
  std::vector<SessionEvents> out(rows.size());
  const auto errors = run_parallel(rows.size(), cfg.workers, [&](std::size_t k) {
    out[k] = session_events(m.rows[rows[k]], cfg);
  });
  collect(result, m, rows, errors, "events");
  auto ev = open_out(result.run_dir / "events.csv");
  auto mt = open_out(result.run_dir / "midturn.csv");
  ev << hash_comment(cfg);
  mt << hash_comment(cfg);
  bool header = true;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (errors[k]) continue;
    const auto& id = m.rows[rows[k]].session_id;
    write_events_csv(ev, id, out[k].events, header);
    write_midturn_csv(mt, id, out[k].midturn, header);
    header = false;
  }
  return result;
}

RunResult run_labels(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "labels");
  const auto rows = unique_sessions(m);
  const auto errors = run_parallel(rows.size(), cfg.workers, [&](std::size_t k) {
    const auto& row = m.rows[rows[k]];
    const auto words = read_words(row.words);
    const auto labels = future_activity_labels(words_to_vad(words, cfg.bridge_ms));
    const auto path = result.run_dir / "labels" / (row.session_id + ".cpfl");
    fs::create_directories(path.parent_path());
    write_labels(path, labels);
  });
  collect(result, m, rows, errors, "labels");
  return result;
}

namespace {

fs::path find_stream(const RunConfig& cfg, const ManifestRow& row, const std::string& cond) {
  if (cfg.streams_dir.empty()) throw Error("streams_dir is not set");
  const std::string stem = row.session_id + "." + cond;
  for (const auto& dir : {cfg.streams_dir / fmt::format("fold{}", row.fold), cfg.streams_dir}) {
    for (const char* ext : {".csv", ".cpps"}) {
      const auto p = dir / (stem + ext);
      if (fs::exists(p)) return p;
    }
  }
  throw Error(fmt::format("no probability stream '{}.csv' or '.cpps' under {}", stem,
                          cfg.streams_dir.string()));
}

// Scores of one manifest row: [metric set][condition].
struct RowScores {
  std::array<std::vector<SessionScores>, 2> by_set;
};

constexpr std::array<MetricSet, 2> kSets = {MetricSet::kShiftPrediction, MetricSet::kShiftHold};

std::vector<std::size_t> scored_rows(const Manifest& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i].split != Split::kTrain) out.push_back(i);
  }
  return out;
}

std::vector<RowScores> score_rows(const Manifest& m, const RunConfig& cfg,
                                  const std::vector<std::size_t>& rows,
                                  const std::vector<std::string>& conditions,
                                  RunResult& result, const char* what) {
  std::vector<RowScores> out(rows.size());
  const auto errors = run_parallel(rows.size(), cfg.workers, [&](std::size_t k) {
    const auto& row = m.rows[rows[k]];
    const auto ev = session_events(row, cfg);
    for (const auto& cond : conditions) {
      const auto stream = read_stream(find_stream(cfg, row, cond));
      for (std::size_t s = 0; s < kSets.size(); ++s) {
        out[k].by_set[s].push_back(
            score_session(row.session_id, stream, ev.events, ev.midturn, kSets[s], cfg.scoring));
      }
    }
  });
  collect(result, m, rows, errors, what);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (errors[k]) out[k] = {};
  }
  return out;
}

const char* set_file_tag(MetricSet set) {
  return set == MetricSet::kShiftPrediction ? "s_pred" : "sh_pred";
}

}  // namespace

RunResult run_score(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "score");
  const auto conditions = expand_conditions(cfg);
  const auto rows = scored_rows(m);
  const auto scores = score_rows(m, cfg, rows, conditions, result, "score");
  auto os = open_out(result.run_dir / "scores.csv");
  os << "session_id,fold,split,condition,snr_db,metric_set,t_s,score,label,config_hash\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& row = m.rows[rows[k]];
    for (std::size_t s = 0; s < kSets.size(); ++s) {
      for (std::size_t c = 0; c < scores[k].by_set[s].size(); ++c) {
        const auto [base, snr] = split_condition(conditions[c]);
        for (const auto& e : scores[k].by_set[s][c].events) {
          os << fmt::format("{},{},{},{},{},{},{:.2f},{:.9g},{},{}\n", row.session_id,
                            row.fold, to_string(row.split), base,
                            snr ? fmt::format("{:g}", *snr) : "", to_string(kSets[s]), e.t_s,
                            e.score, e.shift ? "shift" : "hold", cfg.hash());
        }
      }
    }
  }
  return result;
}

RunResult run_report(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "report");
  const auto conditions = expand_conditions(cfg);
  const auto rows = scored_rows(m);
  const auto scores = score_rows(m, cfg, rows, conditions, result, "report");
  for (std::size_t s = 0; s < kSets.size(); ++s) {
    std::vector<FoldScores> cells;
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      const auto [base, snr] = split_condition(conditions[c]);
      for (int fold = 0; fold < 5; ++fold) {
        FoldScores cell;
        cell.condition = base;
        cell.snr_db = snr;
        cell.fold = fold;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          const auto& row = m.rows[rows[k]];
          if (row.fold != fold || scores[k].by_set[s].empty()) continue;
          const auto& ss = scores[k].by_set[s][c];
          auto& dst = row.split == Split::kVal ? cell.validation : cell.test;
          dst.insert(dst.end(), ss.events.begin(), ss.events.end());
          cell.dropped += ss.dropped;
        }
        if (cell.validation.empty() || cell.test.empty()) {
          const std::string msg = fmt::format("{} {} fold {}: needs both val and test events",
                                              to_string(kSets[s]), conditions[c], fold);
          spdlog::error("report: {}", msg);
          result.errors.push_back({"", msg});
          continue;
        }
        cells.push_back(std::move(cell));
      }
    }
    EvalReport report;
    try {
      report = build_report(kSets[s], cells, cfg.hash());
    } catch (const Error& e) {
      spdlog::error("report: {}", e.what());
      result.errors.push_back({"", e.what()});
      continue;
    }
    const std::string tag = set_file_tag(kSets[s]);
    auto os = open_out(result.run_dir / fmt::format("report_{}.csv", tag));
    write_report_csv(os, report);

    // Paired fold t-tests against the clean condition where both exist.
    auto tt = open_out(result.run_dir / fmt::format("ttest_{}.csv", tag));
    tt << "metric_set,condition,snr_db,versus,kind,t,df,p_two_sided,degenerate,config_hash\n";
    auto folds_of = [&report](const std::string& cond, const std::optional<double>& snr) {
      std::vector<double> v;
      for (const auto& r : report.rows) {
        if (r.condition == cond && r.snr_db == snr) v.push_back(r.metrics.bal_acc);
      }
      return v;
    };
    const auto clean = folds_of("clean", std::nullopt);
    for (const auto& a : report.aggregates) {
      if (a.condition == "clean" && !a.snr_db) continue;
      const auto mine = folds_of(a.condition, a.snr_db);
      if (clean.size() < 2 || mine.size() < 2) continue;
      const auto t = fold_ttest(mine, clean);
      tt << fmt::format("{},{},{},clean,{},{:.6f},{:.6g},{:.6g},{},{}\n", to_string(kSets[s]),
                        a.condition, a.snr_db ? fmt::format("{:g}", *a.snr_db) : "",
                        t.kind == TTestKind::kPaired ? "paired" : "welch", t.t, t.df,
                        t.p_two_sided, t.degenerate ? "true" : "false", cfg.hash());
    }
    const auto points = figure_from_report(report, kSets[s]);
    if (points.empty()) {
      spdlog::info("report: no SNR conditions, no figure data for {}", to_string(kSets[s]));
    } else {
      auto fig = open_out(result.run_dir / fmt::format("figure_{}.csv", tag));
      write_figure_csv(fig, points, "bal_acc", cfg.hash());
    }
  }
  return result;
}

RunResult run_wer(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "wer");
  if (cfg.hyp_dir.empty()) throw Error("hyp_dir is not set");
  const auto conditions = expand_conditions(cfg);
  const auto rows = unique_sessions(m);
  struct Entry {
    int channel;
    std::string condition;
    double wer;
  };
  std::vector<std::vector<Entry>> per(rows.size());
  const auto errors = run_parallel(rows.size(), cfg.workers, [&](std::size_t k) {
    const auto& row = m.rows[rows[k]];
    auto words = read_words(row.words);
    std::stable_sort(words.begin(), words.end(), [](const WordToken& a, const WordToken& b) {
      return a.start_s < b.start_s;
    });
    for (const auto& cond : conditions) {
      for (int c = 0; c < 2; ++c) {
        std::vector<std::string> ref;
        for (const auto& w : words) {
          if (w.channel == c) ref.push_back(w.text);
        }
        if (normalize_words(ref).empty()) continue;
        const auto path = cfg.hyp_dir / fmt::format("{}.{}.ch{}.txt", row.session_id, cond, c);
        std::ifstream is(path);
        if (!is) throw Error("cannot open transcript " + path.string());
        std::stringstream text;
        text << is.rdbuf();
        per[k].push_back({c, cond, wer(ref, split_words(text.str()))});
      }
    }
  });
  collect(result, m, rows, errors, "wer");
  auto os = open_out(result.run_dir / "wer.csv");
  os << "session_id,channel,condition,snr_db,wer,config_hash\n";
  std::vector<WerEntry> entries;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (const auto& e : per[k]) {
      const auto [base, snr] = split_condition(e.condition);
      os << fmt::format("{},{},{},{},{:.6f},{}\n", m.rows[rows[k]].session_id, e.channel, base,
                        snr ? fmt::format("{:g}", *snr) : "", e.wer, cfg.hash());
      if (snr) entries.push_back({base, *snr, e.wer});
    }
  }
  if (!entries.empty()) {
    auto fig = open_out(result.run_dir / "figure_wer.csv");
    write_figure_csv(fig, figure_from_wer(entries), "wer", cfg.hash());
  }
  return result;
}

RunResult run_prosody_train(const Manifest& m, const RunConfig& cfg) {
  auto result = start(cfg, "prosody-train");
  const auto rows = unique_sessions(m);
  std::vector<std::vector<FeatureRow>> per(rows.size());
  const auto errors = run_parallel(rows.size(), cfg.workers, [&](std::size_t k) {
    const auto& row = m.rows[rows[k]];
    const auto ch = read_channels(row);
    const auto ev = session_events(row, cfg);
    const std::array<VocoderFrames, 2> frames = {analyze(ch[0], cfg.vocoder),
                                                 analyze(ch[1], cfg.vocoder)};
    per[k] = session_features(row.session_id, frames, ev.vad, ev.events, cfg.prosody_window_s);
  });
  collect(result, m, rows, errors, "prosody-train");

  std::vector<FeatureRow> all;
  std::vector<std::vector<double>> x;
  std::vector<bool> y;
  std::vector<const FeatureRow*> test;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    all.insert(all.end(), per[k].begin(), per[k].end());
  }
  std::size_t at = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const bool is_test = m.rows[rows[k]].split == Split::kTest;
    for (std::size_t j = 0; j < per[k].size(); ++j, ++at) {
      const auto& r = all[at];
      if (is_test) {
        test.push_back(&r);
      } else {
        x.emplace_back(r.features.values.begin(), r.features.values.end());
        y.push_back(r.shift);
      }
    }
  }
  {
    auto os = open_out(result.run_dir / "features.csv");
    os << hash_comment(cfg);
    write_features_csv(os, all);
  }
  TrainOptions opts;
  opts.seed = cfg.seed;
  LogisticModel model;
  try {
    model = train_logistic(x, y, opts);
  } catch (const Error& e) {
    spdlog::error("prosody-train: {}", e.what());
    result.errors.push_back({"", e.what()});
    return result;
  }
  write_model(result.run_dir / "prosody_model.txt", model);
  auto os = open_out(result.run_dir / "prosody_eval.csv");
  os << "n_train,n_test,bal_acc,f1_weighted,f1_hold,f1_shift,config_hash\n";
  if (test.empty()) {
    spdlog::info("prosody-train: no test sessions, evaluation skipped");
    return result;
  }
  std::vector<bool> pred, truth;
  for (const auto* r : test) {
    pred.push_back(predict(model, r->features) >= 0.5);
    truth.push_back(r->shift);
  }
  const auto cm = classification_metrics(pred, truth);
  os << fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", x.size(), test.size(), cm.bal_acc,
                    cm.f1_weighted, cm.f1_hold, cm.f1_shift, cfg.hash());
  spdlog::info("prosody-train: balanced accuracy {:.3f} on {} test events", cm.bal_acc,
               test.size());
  return result;
}

// --- selftest ----------------------------------------------------------------------

namespace {

// Deterministic stand-in for an ASR transcript: each word survives with a
// condition-dependent probability, and noise-only conditions hallucinate.
std::string fake_transcript(const std::vector<std::string>& ref, const std::string& cond,
                            std::uint64_t seed) {
  const auto [base, snr] = split_condition(cond);
  double p_err = 0.02, p_insert = 0.0;
  if (base == "noise-pi" || base == "noise-p" || base == "noise-i") {
    p_err = 1.0;
    p_insert = 0.4;
  } else if (snr) {
    p_err = 1.0 / (1.0 + std::exp(*snr / 4.0));
  } else if (base != "clean") {
    p_err = 0.05;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::string out;
  for (const auto& w : ref) {
    out += (u(rng) < p_err ? "uh" : w) + " ";
    if (u(rng) < p_insert) out += "mm ";
  }
  return out;
}

void merge_into(RunResult& total, const RunResult& part) {
  total.run_dir = part.run_dir;
  total.succeeded += part.succeeded;
  total.errors.insert(total.errors.end(), part.errors.begin(), part.errors.end());
}

}  // namespace

RunResult run_selftest(const RunConfig& user_cfg) {
  RunConfig cfg = user_cfg;
  cfg.out = user_cfg.out / "selftest";
  cfg.conditions = {"clean", "noise-pi", "flat-pi", "babble"};
  const fs::path corpus_dir = cfg.out / "corpus";

  CueCorpusOptions copts;
  copts.events_per_session = 4;
  copts.turn_min_s = 4.5;  // room for mid-turn points 2 s from any silence
  copts.turn_max_s = 6.0;
  const auto corpus = synth_cue_corpus(10, derive_seed(cfg.seed, "selftest-corpus"), copts);
  Manifest m;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    ManifestRow row;
    row.session_id = s.id;
    for (int c = 0; c < 2; ++c) {
      row.wav[static_cast<std::size_t>(c)] = corpus_dir / fmt::format("{}.ch{}.wav", s.id, c);
      write_wav(row.wav[static_cast<std::size_t>(c)], s.channels[static_cast<std::size_t>(c)]);
    }
    row.words = corpus_dir / (s.id + ".words.jsonl");
    write_words_jsonl(row.words, s.words);
    // Two sessions per fold: one tunes the threshold, one is scored.
    row.fold = static_cast<int>(i / 2);
    row.split = i % 2 == 0 ? Split::kVal : Split::kTest;
    m.rows.push_back(row);
  }
  write_manifest(corpus_dir / "manifest.csv", m);

  RunResult total;
  merge_into(total, run_manipulate(m, cfg));
  merge_into(total, run_events(m, cfg));
  merge_into(total, run_labels(m, cfg));

  // Stub streams: separable for clean, constant for noise-pi, seeded noise
  // elsewhere.
  const fs::path run_dir = cfg.run_dir();
  cfg.streams_dir = run_dir / "streams";
  cfg.hyp_dir = run_dir / "hyp";
  const auto conditions = expand_conditions(cfg);
  for (const auto& row : m.rows) {
    const auto ev = session_events(row, cfg);
    for (const auto& cond : conditions) {
      const auto [base, snr] = split_condition(cond);
      const StubKind kind = base == "clean"      ? StubKind::kSeparable
                            : base == "noise-pi" ? StubKind::kConstant
                                                 : StubKind::kNoisy;
      const auto stream =
          stub_stream(ev.vad.duration_s, ev.events, kind,
                      derive_seed(cfg.seed, "stub/" + row.session_id + "/" + cond), cfg.scoring);
      fs::create_directories(cfg.streams_dir);
      write_stream_csv(cfg.streams_dir / (row.session_id + "." + cond + ".csv"), stream);
      for (int c = 0; c < 2; ++c) {
        std::vector<std::string> ref;
        for (const auto& w : ev.words) {
          if (w.channel == c) ref.push_back(w.text);
        }
        auto os = open_out(cfg.hyp_dir / fmt::format("{}.{}.ch{}.txt", row.session_id, cond, c));
        os << fake_transcript(ref, cond,
                              derive_seed(cfg.seed, fmt::format("hyp/{}/{}/{}", row.session_id,
                                                                cond, c)))
           << '\n';
      }
    }
  }
  merge_into(total, run_score(m, cfg));
  merge_into(total, run_report(m, cfg));
  merge_into(total, run_wer(m, cfg));
  merge_into(total, run_prosody_train(m, cfg));

  // The stubs have known answers.
  for (auto set : kSets) {
    std::ifstream is(run_dir / fmt::format("report_{}.csv", set_file_tag(set)));
    if (!is) {
      total.errors.push_back({"", "selftest: report missing"});
      continue;
    }
    const auto report = read_report_csv(is);
    for (const auto& r : report.rows) {
      const double want = r.condition == "clean" ? 1.0 : r.condition == "noise-pi" ? 0.5 : -1.0;
      if (want >= 0.0 && std::abs(r.metrics.bal_acc - want) > 1e-9) {
        total.errors.push_back(
            {"", fmt::format("selftest: {} {} fold {} balanced accuracy {:.4f}, expected {}",
                             to_string(set), r.condition, r.fold, r.metrics.bal_acc, want)});
      }
    }
  }
  for (const auto& e : total.errors) spdlog::error("selftest: {}", e.message);
  spdlog::info("selftest: {} under {}", total.errors.empty() ? "ok" : "FAILED",
               run_dir.string());
  return total;
}

}  // namespace cueprobe
