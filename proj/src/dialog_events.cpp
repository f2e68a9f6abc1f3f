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

#include "cueprobe/dialog_events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "cueprobe/audio.hpp"
#include "cueprobe/sidecar.hpp"

namespace cueprobe {

namespace {

constexpr double kEps = 1e-9;
constexpr std::uint32_t kLabelsVersion = 1;

std::size_t to_frames(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * VadTrack::kFrameRateHz));
}

// True when exactly `speaker` talks, without the other, over [begin, end).
bool sole_speaker(const VadTrack& vad, int speaker, std::size_t begin,
                  std::size_t end) {
  for (std::size_t j = begin; j < end; ++j) {
    if (!vad.speaking(speaker, j) || vad.speaking(1 - speaker, j)) return false;
  }
  return true;
}

std::optional<int> sole_speaker_of(const VadTrack& vad, std::size_t begin,
                                   std::size_t end) {
  if (begin >= end) return std::nullopt;
  for (int c = 0; c < 2; ++c) {
    if (sole_speaker(vad, c, begin, end)) return c;
  }
  return std::nullopt;
}

}  // namespace

const char* to_string(TurnKind kind) {
  return kind == TurnKind::kShift ? "shift" : "hold";
}

std::vector<Segment> merge_words(std::span<const WordToken> words, int channel,
                                 double bridge_ms) {
  std::vector<const WordToken*> mine;
  for (const auto& w : words) {
    if (w.channel != 0 && w.channel != 1) {
      throw Error(fmt::format("word '{}' has channel {}, expected 0 or 1",
                              w.text, w.channel));
    }
    if (!(w.start_s < w.end_s)) {
      throw Error(fmt::format("word '{}' has start {} >= end {}", w.text,
                              w.start_s, w.end_s));
    }
    if (w.channel == channel) mine.push_back(&w);
  }
  std::stable_sort(mine.begin(), mine.end(), [](const auto* a, const auto* b) {
    return a->start_s < b->start_s;
  });
  std::vector<Segment> out;
  const double bridge_s = bridge_ms / 1000.0;
  const WordToken* prev = nullptr;
  for (const auto* w : mine) {
    if (prev && w->start_s < prev->end_s - kEps) {
      throw Error(fmt::format(
          "overlapping words on channel {}: '{}' [{}, {}] and '{}' [{}, {}]",
          channel, prev->text, prev->start_s, prev->end_s, w->text, w->start_s,
          w->end_s));
    }
    if (!out.empty() && w->start_s - out.back().end_s <= bridge_s + kEps) {
      out.back().end_s = std::max(out.back().end_s, w->end_s);
    } else {
      out.push_back({w->start_s, w->end_s});
    }
    prev = w;
  }
  return out;
}

VadTrack words_to_vad(std::span<const WordToken> words, double bridge_ms,
                      std::optional<double> duration_s) {
  VadTrack vad;
  double duration = duration_s.value_or(0.0);
  if (!duration_s) {
    for (const auto& w : words) duration = std::max(duration, w.end_s);
  }
  vad.duration_s = duration;
  const auto n = static_cast<std::size_t>(
      std::max(0.0, std::ceil(duration * VadTrack::kFrameRateHz - kEps)));
  for (int c = 0; c < 2; ++c) {
    auto& track = vad.active[static_cast<std::size_t>(c)];
    track.assign(n, false);
    const double frame = 1.0 / VadTrack::kFrameRateHz;
    for (const auto& seg : merge_words(words, c, bridge_ms)) {
      const auto first = static_cast<std::size_t>(
          std::max(0.0, std::floor(seg.start_s * VadTrack::kFrameRateHz)));
      for (std::size_t j = first; j < n; ++j) {
        const double lo = static_cast<double>(j) * frame;
        if (lo >= seg.end_s) break;
        const double overlap =
            std::min(seg.end_s, lo + frame) - std::max(seg.start_s, lo);
        if (overlap >= 0.5 * frame - kEps) track[j] = true;
      }
    }
  }
  return vad;
}

std::vector<TurnEvent> extract_events(const VadTrack& vad, double min_silence_ms,
                                      double context_s) {
  std::vector<TurnEvent> events;
  const std::size_t n = vad.frames();
  const std::size_t context = to_frames(context_s);
  const double min_gap_s = min_silence_ms / 1000.0;
  std::size_t j = 0;
  while (j < n) {
    if (vad.speaking(0, j) || vad.speaking(1, j)) {
      ++j;
      continue;
    }
    const std::size_t start = j;
    while (j < n && !vad.speaking(0, j) && !vad.speaking(1, j)) ++j;
    const std::size_t end = j;  // first frame after the silence
    const double gap_s = static_cast<double>(end - start) / VadTrack::kFrameRateHz;
    if (start == 0 || end == n || gap_s <= min_gap_s + kEps) continue;
    if (start < context || end + context > n) continue;
    const auto prev = sole_speaker_of(vad, start - context, start);
    const auto next = sole_speaker_of(vad, end, end + context);
    if (!prev || !next) continue;
    events.push_back({*prev == *next ? TurnKind::kHold : TurnKind::kShift,
                      static_cast<double>(start) / VadTrack::kFrameRateHz,
                      static_cast<double>(end) / VadTrack::kFrameRateHz, *prev,
                      *next});
  }
  return events;
}

std::vector<MidTurnPoint> sample_midturn(const VadTrack& vad,
                                         std::span<const TurnEvent> events,
                                         const MidTurnOptions& options) {
  const std::size_t n = vad.frames();
  const std::size_t margin = to_frames(options.margin_s);
  const std::size_t stride = std::max<std::size_t>(1, to_frames(options.stride_s));
  const double margin_s = static_cast<double>(margin) / VadTrack::kFrameRateHz;

  auto clear_of_events = [&](double t) {
    for (const auto& e : events) {
      if (t > e.silence_start_s - margin_s + kEps &&
          t < e.silence_end_s + margin_s - kEps) {
        return false;
      }
    }
    return true;
  };

  std::vector<MidTurnPoint> points;
  for (int c = 0; c < 2; ++c) {
    std::size_t j = 0;
    while (j < n) {
      if (!(vad.speaking(c, j) && !vad.speaking(1 - c, j))) {
        ++j;
        continue;
      }
      const std::size_t begin = j;
      while (j < n && vad.speaking(c, j) && !vad.speaking(1 - c, j)) ++j;
      const std::size_t end = j;
      for (std::size_t t = begin + margin; t + margin <= end; t += stride) {
        const double ts = static_cast<double>(t) / VadTrack::kFrameRateHz;
        if (t < end && clear_of_events(ts)) points.push_back({ts, c});
      }
    }
  }
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return a.t_s < b.t_s || (a.t_s == b.t_s && a.speaker < b.speaker);
  });

  if (options.cap_to_shifts) {
    const auto shifts = static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(),
                      [](const auto& e) { return e.kind == TurnKind::kShift; }));
    if (points.size() > shifts) {
      std::mt19937_64 rng(options.seed);
      std::shuffle(points.begin(), points.end(), rng);
      points.resize(shifts);
      std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
        return a.t_s < b.t_s || (a.t_s == b.t_s && a.speaker < b.speaker);
      });
    }
  }
  return points;
}

FutureActivityLabels future_activity_labels(const VadTrack& vad) {
  constexpr std::size_t kSub = 5;  // 100 Hz frames per 50 ms bin
  constexpr std::size_t kHorizon = kSub * FutureActivityLabels::kBins;
  const std::size_t n = vad.frames();
  FutureActivityLabels labels;
  const std::size_t frames = (n + kSub - 1) / kSub;
  labels.bits.resize(frames);
  labels.valid.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t t = f * kSub;
    labels.valid[f] = t + kHorizon <= n;
    for (int c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < FutureActivityLabels::kBins; ++k) {
        std::size_t count = 0;
        for (std::size_t s = 0; s < kSub; ++s) {
          const std::size_t j = t + k * kSub + s;
          if (j < n && vad.speaking(c, j)) ++count;
        }
        labels.bits[f][static_cast<std::size_t>(c)][k] = 2 * count >= kSub;
      }
    }
  }
  return labels;
}

std::vector<WordToken> read_words_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open word timings " + path.string());
  std::vector<WordToken> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      WordToken w;
      w.text = j.at("text").get<std::string>();
      w.start_s = j.at("start").get<double>();
      w.end_s = j.at("end").get<double>();
      w.channel = j.at("channel").get<int>();
      words.push_back(std::move(w));
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return words;
}

std::vector<WordToken> read_words_ctm(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open word timings " + path.string());
  std::vector<WordToken> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string file, channel;
    double start = 0.0, duration = 0.0;
    WordToken w;
    if (!(fields >> file >> channel >> start >> duration >> w.text)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw Error(fmt::format("{}:{}: malformed CTM line", path.string(), lineno));
    }
    if (channel == "A" || channel == "a" || channel == "1") {
      w.channel = 0;
    } else if (channel == "B" || channel == "b" || channel == "2") {
      w.channel = 1;
    } else {
      throw Error(fmt::format("{}:{}: unknown CTM channel '{}'", path.string(),
                              lineno, channel));
    }
    w.start_s = start;
    w.end_s = start + duration;
    words.push_back(std::move(w));
  }
  return words;
}

std::vector<WordToken> read_words(const std::filesystem::path& path) {
  if (path.extension() == ".ctm") return read_words_ctm(path);
  return read_words_jsonl(path);
}

void write_words_jsonl(const std::filesystem::path& path,
                       std::span<const WordToken> words) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& w : words) {
    nlohmann::json j = {{"text", w.text},
                        {"start", w.start_s},
                        {"end", w.end_s},
                        {"channel", w.channel}};
    os << j.dump() << '\n';
  }
}

void write_events_csv(std::ostream& os, const std::string& session_id,
                      std::span<const TurnEvent> events, bool header) {
  if (header) os << "session_id,kind,silence_start,silence_end,prev,next\n";
  for (const auto& e : events) {
    os << fmt::format("{},{},{:.2f},{:.2f},{},{}\n", session_id,
                      to_string(e.kind), e.silence_start_s, e.silence_end_s,
                      e.prev_speaker, e.next_speaker);
  }
}

void write_midturn_csv(std::ostream& os, const std::string& session_id,
                       std::span<const MidTurnPoint> points, bool header) {
  if (header) os << "session_id,t,speaker\n";
  for (const auto& p : points) {
    os << fmt::format("{},{:.2f},{}\n", session_id, p.t_s, p.speaker);
  }
}

void write_labels(const std::filesystem::path& path,
                  const FutureActivityLabels& labels) {
  SidecarWriter out(path, "CPFL", kLabelsVersion);
  out.f64(FutureActivityLabels::kFrameRateHz);
  out.u64(labels.frames());
  out.u32(2);
  out.u32(static_cast<std::uint32_t>(FutureActivityLabels::kBins));
  for (std::size_t f = 0; f < labels.frames(); ++f) {
    out.u8(labels.valid[f] ? 1 : 0);
    // 80 bits packed LSB-first: channel 0 bins 0..39 then channel 1.
    std::array<std::uint8_t, 10> packed{};
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < FutureActivityLabels::kBins; ++k) {
        if (labels.bits[f][c][k]) {
          const std::size_t bit = c * FutureActivityLabels::kBins + k;
          packed[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
        }
      }
    }
    for (auto b : packed) out.u8(b);
  }
  out.close();
}

FutureActivityLabels read_labels(const std::filesystem::path& path) {
  SidecarReader in(path, "CPFL", kLabelsVersion);
  const double rate = in.f64();
  const auto n = static_cast<std::size_t>(in.u64());
  const auto channels = in.u32();
  const auto bins = in.u32();
  if (rate != FutureActivityLabels::kFrameRateHz || channels != 2 ||
      bins != FutureActivityLabels::kBins) {
    throw Error(path.string() + ": unexpected label geometry");
  }
  FutureActivityLabels labels;
  labels.bits.resize(n);
  labels.valid.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    labels.valid[f] = in.u8() != 0;
    std::array<std::uint8_t, 10> packed{};
    for (auto& b : packed) b = in.u8();
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < FutureActivityLabels::kBins; ++k) {
        const std::size_t bit = c * FutureActivityLabels::kBins + k;
        labels.bits[f][c][k] = (packed[bit / 8] >> (bit % 8)) & 1u;
      }
    }
  }
  if (!in.at_end()) throw Error(path.string() + ": trailing bytes in labels");
  return labels;
}

}  // namespace cueprobe
