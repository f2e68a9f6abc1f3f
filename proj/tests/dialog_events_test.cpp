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
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cueprobe/audio.hpp"
#include "dyads.hpp"

namespace cueprobe {
namespace {

using testing::brute_force_events;
using testing::random_dyad;
using testing::track_from;

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cueprobe_de_" + name);
}

TEST(WordsToVad, BridgesShortGap) {
  std::vector<WordToken> words = {{"a", 0.0, 0.5, 0}, {"b", 0.55, 1.0, 0}};
  const auto segs = merge_words(words, 0, 100.0);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_DOUBLE_EQ(segs[0].start_s, 0.0);
  EXPECT_DOUBLE_EQ(segs[0].end_s, 1.0);
  const auto vad = words_to_vad(words);
  ASSERT_EQ(vad.frames(), 100u);
  for (std::size_t j = 0; j < 100; ++j) EXPECT_TRUE(vad.speaking(0, j));
}

TEST(WordsToVad, LongGapSplits) {
  std::vector<WordToken> words = {{"a", 0.0, 0.5, 1}, {"b", 0.8, 1.0, 1}};
  EXPECT_EQ(merge_words(words, 1, 100.0).size(), 2u);
  const auto vad = words_to_vad(words);
  EXPECT_TRUE(vad.speaking(1, 49));
  EXPECT_FALSE(vad.speaking(1, 50));
  EXPECT_FALSE(vad.speaking(1, 79));
  EXPECT_TRUE(vad.speaking(1, 80));
  for (std::size_t j = 0; j < vad.frames(); ++j) EXPECT_FALSE(vad.speaking(0, j));
}

TEST(WordsToVad, EmptyWordsGiveSilentTrack) {
  const auto vad = words_to_vad({}, 100.0, 3.0);
  ASSERT_EQ(vad.frames(), 300u);
  for (std::size_t j = 0; j < 300; ++j) {
    EXPECT_FALSE(vad.speaking(0, j));
    EXPECT_FALSE(vad.speaking(1, j));
  }
  EXPECT_EQ(words_to_vad({}).frames(), 0u);
}

TEST(WordsToVad, HalfFrameOverlapRule) {
  // 0.004 s of frame 1 is covered: under half a frame.
  std::vector<WordToken> words = {{"a", 0.0, 0.014, 0}};
  auto vad = words_to_vad(words, 100.0, 0.05);
  EXPECT_TRUE(vad.speaking(0, 0));
  EXPECT_FALSE(vad.speaking(0, 1));
  words[0].end_s = 0.016;
  vad = words_to_vad(words, 100.0, 0.05);
  EXPECT_TRUE(vad.speaking(0, 1));
}

TEST(WordsToVad, OverlappingTokensRejectedWithPair) {
  std::vector<WordToken> words = {{"hello", 0.0, 0.5, 0}, {"there", 0.4, 0.9, 0}};
  try {
    words_to_vad(words);
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("hello"), std::string::npos);
    EXPECT_NE(msg.find("there"), std::string::npos);
  }
  // Same times on different channels are fine.
  words[1].channel = 1;
  EXPECT_NO_THROW(words_to_vad(words));
}

TEST(WordsToVad, InvalidTokensRejected) {
  std::vector<WordToken> words = {{"x", 0.5, 0.5, 0}};
  EXPECT_THROW(words_to_vad(words), Error);
  words = {{"x", 0.0, 0.5, 2}};
  EXPECT_THROW(words_to_vad(words), Error);
}

TEST(ExtractEvents, ShiftAfterGap) {
  const auto vad = track_from({{0.0, 1.0}}, {{1.3, 2.5}}, 2.5);
  const auto events = extract_events(vad);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].kind, TurnKind::kShift);
  EXPECT_NEAR(events[0].silence_start_s, 1.0, 1e-12);
  EXPECT_NEAR(events[0].silence_end_s, 1.3, 1e-12);
  EXPECT_EQ(events[0].prev_speaker, 0);
  EXPECT_EQ(events[0].next_speaker, 1);
}

TEST(ExtractEvents, HoldWhenSameSpeakerResumes) {
  const auto vad = track_from({{0.0, 1.0}, {1.3, 2.5}}, {}, 2.5);
  const auto events = extract_events(vad);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].kind, TurnKind::kHold);
  EXPECT_EQ(events[0].prev_speaker, 0);
  EXPECT_EQ(events[0].next_speaker, 0);
}

TEST(ExtractEvents, ShortGapIgnored) {
  EXPECT_TRUE(extract_events(track_from({{0.0, 1.0}}, {{1.15, 2.5}}, 2.5)).empty());
  // Exactly 200 ms is not "more than" 200 ms.
  EXPECT_TRUE(extract_events(track_from({{0.0, 1.0}}, {{1.2, 2.5}}, 2.5)).empty());
  EXPECT_EQ(extract_events(track_from({{0.0, 1.0}}, {{1.21, 2.5}}, 2.5)).size(), 1u);
}

TEST(ExtractEvents, OverlapInContextSkipsGap) {
  // B backchannels inside A's final second.
  auto vad = track_from({{0.0, 1.0}}, {{0.4, 0.6}, {1.3, 2.5}}, 2.5);
  EXPECT_TRUE(extract_events(vad).empty());
  // Too little context after the gap.
  vad = track_from({{0.0, 1.0}}, {{1.3, 2.0}}, 2.0);
  EXPECT_TRUE(extract_events(vad).empty());
}

TEST(ExtractEvents, MatchesBruteForceOracle) {
  std::mt19937_64 rng(20260101);
  std::size_t total = 0, shifts = 0, holds = 0;
  for (int trial = 0; trial < 1500; ++trial) {
    const auto vad = random_dyad(rng);
    const double min_sil = trial % 3 == 0 ? 200.0 : 100.0 + 50.0 * (trial % 7);
    const double context = trial % 5 == 0 ? 0.5 : 1.0;
    const auto got = extract_events(vad, min_sil, context);
    const auto want = brute_force_events(vad, min_sil, context);
    ASSERT_EQ(got, want) << "trial " << trial;
    total += got.size();
    for (const auto& e : got) (e.kind == TurnKind::kShift ? shifts : holds)++;
  }
  // The generator must actually exercise both kinds.
  EXPECT_GT(shifts, 500u);
  EXPECT_GT(holds, 500u);
  EXPECT_EQ(total, shifts + holds);
}

TEST(ExtractEvents, RaisingMinSilenceNeverAddsEvents) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto vad = random_dyad(rng);
    auto previous = extract_events(vad, 100.0);
    for (double ms = 150.0; ms <= 600.0; ms += 50.0) {
      const auto now = extract_events(vad, ms);
      EXPECT_LE(now.size(), previous.size());
      for (const auto& e : now) {
        EXPECT_NE(std::find(previous.begin(), previous.end(), e), previous.end());
      }
      previous = now;
    }
  }
}

TEST(ExtractEvents, EventInvariants) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    for (const auto& e : extract_events(random_dyad(rng))) {
      EXPECT_GT(e.silence_end_s - e.silence_start_s, 0.2);
      EXPECT_EQ(e.kind == TurnKind::kShift, e.prev_speaker != e.next_speaker);
    }
  }
}

TEST(SampleMidturn, GridInsideStretch) {
  const auto vad = track_from({{0.0, 10.0}}, {}, 10.0);
  MidTurnOptions opts;
  opts.cap_to_shifts = false;
  const auto points = sample_midturn(vad, {}, opts);
  ASSERT_EQ(points.size(), 7u);
  for (std::size_t i = 0; i < points.size(); ++i) {
    EXPECT_NEAR(points[i].t_s, 2.0 + static_cast<double>(i), 1e-12);
    EXPECT_EQ(points[i].speaker, 0);
  }
}

TEST(SampleMidturn, ShortStretchYieldsNothing) {
  const auto vad = track_from({}, {{1.0, 4.0}}, 5.0);
  MidTurnOptions opts;
  opts.cap_to_shifts = false;
  EXPECT_TRUE(sample_midturn(vad, {}, opts).empty());
}

TEST(SampleMidturn, CappedToShiftCount) {
  // Three shifts, then a long monologue with many grid points.
  const auto vad = track_from({{0.0, 2.0}, {5.0, 7.0}, {8.0, 30.0}},
                              {{2.5, 4.5}, {7.5, 7.6}}, 30.0);
  std::vector<TurnEvent> shifts = {
      {TurnKind::kShift, 2.0, 2.5, 0, 1},
      {TurnKind::kShift, 4.5, 5.0, 1, 0},
      {TurnKind::kShift, 10.0, 10.5, 0, 1},
  };
  MidTurnOptions opts;
  opts.seed = 3;
  const auto capped = sample_midturn(vad, shifts, opts);
  EXPECT_EQ(capped.size(), 3u);
  EXPECT_EQ(capped, sample_midturn(vad, shifts, opts));
  opts.cap_to_shifts = false;
  const auto all = sample_midturn(vad, shifts, opts);
  EXPECT_GT(all.size(), 3u);
  for (const auto& p : capped) {
    EXPECT_NE(std::find(all.begin(), all.end(), p), all.end());
  }
}

TEST(SampleMidturn, PointsRespectMarginsAndActivity) {
  std::mt19937_64 rng(11);
  MidTurnOptions opts;
  opts.cap_to_shifts = false;
  for (int trial = 0; trial < 100; ++trial) {
    const auto vad = random_dyad(rng);
    const auto events = extract_events(vad);
    for (const auto& p : sample_midturn(vad, events, opts)) {
      const auto j = static_cast<std::size_t>(std::llround(p.t_s * 100.0));
      ASSERT_LT(j, vad.frames());
      EXPECT_TRUE(vad.speaking(p.speaker, j));
      EXPECT_FALSE(vad.speaking(1 - p.speaker, j));
      // Sole-speaker stretch extends 2 s either side (200 frames before, 199 after).
      for (std::size_t k = j - 200; k < j + 200; ++k) {
        ASSERT_LT(k, vad.frames());
        EXPECT_TRUE(vad.speaking(p.speaker, k) && !vad.speaking(1 - p.speaker, k));
      }
      for (const auto& e : events) {
        EXPECT_TRUE(p.t_s <= e.silence_start_s - 2.0 + 1e-9 ||
                    p.t_s >= e.silence_end_s + 2.0 - 1e-9);
      }
    }
  }
}

TEST(FutureActivity, BinArithmetic) {
  // B active from t+0.5 to t+2.0 with t = 1.0.
  const auto vad = track_from({}, {{1.5, 3.0}}, 4.0);
  const auto labels = future_activity_labels(vad);
  const std::size_t f = 20;  // t = 1.0 s
  ASSERT_TRUE(labels.valid[f]);
  for (std::size_t k = 0; k < 40; ++k) {
    EXPECT_EQ(labels.bits[f][1][k], k >= 10) << k;
    EXPECT_FALSE(labels.bits[f][0][k]);
  }
}

TEST(FutureActivity, SilentSessionValidity) {
  const auto vad = track_from({}, {}, 5.0);
  const auto labels = future_activity_labels(vad);
  ASSERT_EQ(labels.frames(), 100u);
  for (std::size_t f = 0; f < labels.frames(); ++f) {
    EXPECT_EQ(labels.valid[f], f <= 60u) << f;  // t + 2 s <= 5 s
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < 40; ++k) EXPECT_FALSE(labels.bits[f][c][k]);
    }
  }
  EXPECT_FALSE(labels.valid[80]);  // 1 s before the end
}

TEST(FutureActivity, FirstBinMatchesDownsampledActivity) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto vad = random_dyad(rng);
    const auto labels = future_activity_labels(vad);
    for (std::size_t f = 0; f < labels.frames(); ++f) {
      if (!labels.valid[f]) continue;
      for (int c = 0; c < 2; ++c) {
        int count = 0;
        for (std::size_t j = 5 * f; j < 5 * f + 5; ++j) count += vad.speaking(c, j);
        EXPECT_EQ(labels.bits[f][static_cast<std::size_t>(c)][0], count >= 3);
      }
    }
  }
}

TEST(FutureActivity, SidecarRoundTrip) {
  std::mt19937_64 rng(4);
  const auto labels = future_activity_labels(random_dyad(rng));
  const auto path = temp_path("labels.bin");
  write_labels(path, labels);
  const auto back = read_labels(path);
  EXPECT_EQ(back.bits, labels.bits);
  EXPECT_EQ(back.valid, labels.valid);
  std::filesystem::remove(path);
}

TEST(WordIo, JsonlRoundTrip) {
  std::vector<WordToken> words = {{"hi", 0.1, 0.4, 0}, {"yes, \"ok\"", 1.25, 1.5, 1}};
  const auto path = temp_path("words.jsonl");
  write_words_jsonl(path, words);
  const auto back = read_words(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].text, "yes, \"ok\"");
  EXPECT_DOUBLE_EQ(back[1].start_s, 1.25);
  EXPECT_EQ(back[1].channel, 1);
  std::filesystem::remove(path);
}

TEST(WordIo, CtmChannels) {
  const auto path = temp_path("words.ctm");
  {
    std::ofstream os(path);
    os << ";; comment\n"
       << "sess A 0.10 0.30 hello 0.9\n"
       << "sess 2 1.00 0.25 there\n";
  }
  const auto words = read_words(path);
  ASSERT_EQ(words.size(), 2u);
  EXPECT_EQ(words[0].channel, 0);
  EXPECT_NEAR(words[0].end_s, 0.40, 1e-12);
  EXPECT_EQ(words[1].channel, 1);
  EXPECT_EQ(words[1].text, "there");
  std::filesystem::remove(path);
}

TEST(WordIo, MalformedJsonNamesLine) {
  const auto path = temp_path("bad.jsonl");
  {
    std::ofstream os(path);
    os << R"({"text":"a","start":0,"end":1,"channel":0})" << "\n{oops\n";
  }
  try {
    read_words(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(EventIo, CsvLayout) {
  std::ostringstream os;
  std::vector<TurnEvent> events = {{TurnKind::kShift, 1.0, 1.3, 0, 1}};
  write_events_csv(os, "s1", events);
  EXPECT_EQ(os.str(),
            "session_id,kind,silence_start,silence_end,prev,next\n"
            "s1,shift,1.00,1.30,0,1\n");
  std::ostringstream mt;
  std::vector<MidTurnPoint> points = {{4.0, 1}};
  write_midturn_csv(mt, "s1", points);
  EXPECT_EQ(mt.str(), "session_id,t,speaker\ns1,4.00,1\n");
}

}  // namespace
}  // namespace cueprobe
