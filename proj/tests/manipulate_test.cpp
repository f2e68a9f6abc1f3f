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
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

namespace cueprobe {
namespace {

using testing::kFs;

VocoderFrames track(std::vector<double> f0) {
  VocoderConfig cfg;
  VocoderFrames f;
  f.config = cfg;
  f.f0.f0_hz = std::move(f0);
  const std::size_t bins = cfg.fft_size / 2 + 1;
  f.envelope.fft_size = cfg.fft_size;
  for (std::size_t i = 0; i < f.f0.size(); ++i) {
    f.envelope.power.push_back(std::vector<double>(bins, 1e-3 * (i + 1)));
    f.aperiodicity.ratio.push_back(f.f0.f0_hz[i] > 0 ? 0.1 : 1.0);
  }
  return f;
}

double active_rms_std(const Waveform& out, const Waveform& reference,
                      const VocoderConfig& cfg) {
  return testing::stddev(
      testing::masked(frame_rms_db(out, cfg), active_frames(reference, cfg)));
}

// --- flatten_pitch ---------------------------------------------------------

TEST(FlattenPitch, VoicedFramesTakeTheMean) {
  const auto out = flatten_pitch(track({100, 0, 120, 140}));
  EXPECT_EQ(out.f0.f0_hz, (std::vector<double>{120, 0, 120, 120}));
}

TEST(FlattenPitch, ConstantAndUnvoicedTracksAreFixedPoints) {
  const auto flat = track({150, 150, 0, 150});
  EXPECT_EQ(flatten_pitch(flat).f0.f0_hz, flat.f0.f0_hz);
  const auto silent = track({0, 0, 0});
  EXPECT_EQ(flatten_pitch(silent).f0.f0_hz, silent.f0.f0_hz);
}

TEST(FlattenPitch, LeavesEnvelopeAndAperiodicityAlone) {
  const auto in = track({100, 0, 200, 0, 300});
  const auto out = flatten_pitch(in);
  EXPECT_EQ(out.envelope.power, in.envelope.power);
  EXPECT_EQ(out.aperiodicity.ratio, in.aperiodicity.ratio);
}

TEST(FlattenPitch, MeansAreTakenPerScope) {
  const std::vector<FrameRange> scopes = {{0, 3}, {3, 6}};
  const auto out = flatten_pitch(track({100, 200, 0, 300, 0, 500}), scopes);
  EXPECT_EQ(out.f0.f0_hz, (std::vector<double>{150, 150, 0, 400, 0, 400}));
}

TEST(FlattenPitch, Idempotent) {
  const auto once = flatten_pitch(track({90, 0, 130, 170, 0, 110}));
  EXPECT_EQ(flatten_pitch(once).f0.f0_hz, once.f0.f0_hz);
}

TEST(Scopes, GroupsCoverUnclaimedFrames) {
  const std::vector<FrameRange> r = {{2, 4}, {6, 7}};
  EXPECT_EQ(scope_groups(r, 8), (std::vector<std::size_t>{2, 2, 0, 0, 2, 2, 1, 2}));
  EXPECT_EQ(scope_groups({}, 3), (std::vector<std::size_t>{0, 0, 0}));
}

TEST(Scopes, IpuRangesOnFrameGrid) {
  const std::vector<Segment> ipus = {{0.105, 0.5}, {1.0, 1.2}};
  const auto r = ipu_ranges(ipus, 200, VocoderConfig{});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].begin, 11u);
  EXPECT_EQ(r[0].end, 50u);
  EXPECT_EQ(r[1].begin, 100u);
  EXPECT_EQ(r[1].end, 120u);
  EXPECT_EQ(window_ranges(7000, VocoderConfig{}).size(), 3u);
}

TEST(Scopes, ParseNames) {
  EXPECT_EQ(parse_mean_scope("ipu"), MeanScope::kIpu);
  EXPECT_EQ(parse_mean_scope("window"), MeanScope::kWindow);
  EXPECT_EQ(parse_mean_scope("whole"), MeanScope::kWhole);
  EXPECT_FALSE(parse_mean_scope("turn"));
}

// --- flatten_intensity ------------------------------------------------------

TEST(FlattenIntensity, TwoLevelsMeetInTheMiddle) {
  const VocoderConfig cfg;
  const auto w = testing::concat({testing::vibrato_vowel(1.0, 140, 0, 1, -20.0),
                                  testing::vibrato_vowel(1.0, 140, 0, 1, -30.0)});
  const auto out = flatten_intensity(w, cfg);
  const auto db = frame_rms_db(out, cfg);
  // Skip the edges and the step where the smoothed gain is still moving.
  for (std::size_t i = 5; i + 5 < db.size(); ++i) {
    if (i > 90 && i < 110) continue;
    EXPECT_NEAR(db[i], -25.0, 0.5) << "frame " << i;
  }
}

TEST(FlattenIntensity, AlreadyFlatInputKeepsUnitGain) {
  const VocoderConfig cfg;
  const auto w = testing::vibrato_vowel(1.5, 160, 5, 5, -22.0);
  const auto out = flatten_intensity(w, cfg);
  double worst = 0.0;
  for (std::size_t s = 0; s < w.size(); ++s) {
    if (std::abs(w.samples[s]) > 1e-3) {
      worst = std::max(worst, std::abs(out.samples[s] / w.samples[s] - 1.0));
    }
  }
  EXPECT_LT(worst, 0.05);
}

TEST(FlattenIntensity, SilenceBelowFloorIsBitUnchanged) {
  const VocoderConfig cfg;
  auto quiet = testing::white_noise(0.5, 1e-5, 3);  // about -100 dB
  const auto w = testing::concat({quiet, testing::vibrato_vowel(1.0, 120, 0, 1, -18.0),
                                  testing::vibrato_vowel(1.0, 120, 0, 1, -32.0)});
  const auto out = flatten_intensity(w, cfg);
  const std::size_t onset = quiet.size();
  const std::size_t guard = 2 * cfg.hop_samples(kFs);
  for (std::size_t s = 0; s + guard < onset; ++s) {
    ASSERT_EQ(out.samples[s], w.samples[s]) << "sample " << s;
  }
}

TEST(FlattenIntensity, SilentInputIsIdentity) {
  const auto w = testing::silence(0.5);
  EXPECT_EQ(flatten_intensity(w, VocoderConfig{}).samples, w.samples);
}

TEST(FlattenIntensity, SpeechFixturesEndFlat) {
  const VocoderConfig cfg;
  for (int fx = 0; fx < 6; ++fx) {
    const auto w = testing::speech_like(4.0, 90 + 6 * fx, 100 + fx);
    const auto out = flatten_intensity(w, cfg);
    EXPECT_LT(active_rms_std(out, w, cfg), 1.5) << "fixture " << fx;
    EXPECT_GT(active_rms_std(w, w, cfg), 3.0) << "fixture " << fx;
  }
}

TEST(FlattenIntensity, ReapplyingStaysFlat) {
  const VocoderConfig cfg;
  const auto w = testing::speech_like(3.0, 120, 7);
  const auto once = flatten_intensity(w, cfg);
  const auto twice = flatten_intensity(once, cfg);
  EXPECT_LT(active_rms_std(once, w, cfg), 1.5);
  EXPECT_LT(active_rms_std(twice, w, cfg), 1.5);
}

TEST(ContourGain, InactiveNeighbourhoodGainIsExactlyOne) {
  const VocoderConfig cfg;
  const auto w = testing::sine(200, 0.3);
  const auto n = frame_count_for(w.size(), cfg, kFs);
  std::vector<bool> active(n, false);
  for (std::size_t i = 10; i < 20; ++i) active[i] = true;
  const std::vector<double> target(n, 0.0);  // sine sits at -9 dB
  const auto g = contour_gain(w, cfg, target, active, 50.0);
  const std::size_t hop = cfg.hop_samples(kFs);
  for (std::size_t s = 0; s < 9 * hop; ++s) ASSERT_EQ(g[s], 1.0);
  EXPECT_GT(g[15 * hop], 1.0);
  EXPECT_THROW(contour_gain(w, cfg, std::vector<double>(n - 1), active, 50.0), Error);
}

// --- pink noise ----------------------------------------------------------------

TEST(PinkNoise, SlopeIsMinusTenPerDecade) {
  const auto w = pink_noise(10.0, kFs, 42);
  EXPECT_NEAR(testing::psd_slope_db_per_decade(w, 100.0, 6000.0), -10.0, 1.5);
}

TEST(PinkNoise, UnitRmsAndDeterministic) {
  const auto a = pink_noise(2.0, kFs, 5);
  const auto b = pink_noise(2.0, kFs, 5);
  const auto c = pink_noise(2.0, kFs, 6);
  EXPECT_NEAR(rms(a.samples), 1.0, 1e-3);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  EXPECT_EQ(a.size(), static_cast<std::size_t>(2 * kFs));
  EXPECT_THROW(pink_noise(0.0, kFs, 1), Error);
}

TEST(PinkNoise, EnvelopeShape) {
  const auto e = pink_envelope(512, kFs);
  ASSERT_EQ(e.size(), 257u);
  EXPECT_DOUBLE_EQ(e[0], 1.0 / 20.0);  // held below 20 Hz
  EXPECT_DOUBLE_EQ(e[1], 1.0 / 31.25);
  EXPECT_NEAR(e[10] / e[20], 2.0, 1e-12);
}

// --- prosody-matched noise -------------------------------------------------------

TEST(ProsodyMatchedNoise, VibratoPitchSurvives) {
  const VocoderConfig cfg;
  for (double centre : {110.0, 180.0, 260.0}) {
    const auto w = testing::vibrato_vowel(2.0, centre, 5, 5);
    const auto frames = analyze(w, cfg);
    const auto out = prosody_matched_noise(frames, w, PmVariant::kMatchBoth, 9);
    EXPECT_EQ(out.size(), w.size());
    EXPECT_LT(testing::voiced_rmse(frames.f0, analyze(out, cfg).f0), 5.0) << centre;
  }
}

TEST(ProsodyMatchedNoise, SpeechFixturesKeepProsodyAndLoseSpectrum) {
  const VocoderConfig cfg;
  for (int fx = 0; fx < 4; ++fx) {
    const auto w = testing::speech_like(4.0, 95 + 20 * fx, 300 + fx);
    const auto frames = analyze(w, cfg);
    const auto out = prosody_matched_noise(frames, w, PmVariant::kMatchBoth, 1);
    const auto re = analyze(out, cfg);
    const auto act = active_frames(w, cfg);
    EXPECT_LT(testing::voiced_rmse(frames.f0, re.f0), 5.0) << fx;
    EXPECT_GT(testing::pearson(testing::masked(frame_rms_db(w, cfg), act),
                               testing::masked(frame_rms_db(out, cfg), act)),
              0.95)
        << fx;
    EXPECT_LT(testing::envelope_correlation(frames, re, act, true), 0.3) << fx;
  }
}

TEST(ProsodyMatchedNoise, ResynthesisKeepsSpectrumUnderTheSameMeasure) {
  // Control: the tilt-removed correlation does see a preserved envelope.
  const VocoderConfig cfg;
  const auto w = testing::speech_like(4.0, 120, 301);
  const auto frames = analyze(w, cfg);
  auto resynth = synthesize(flatten_pitch(frames), 4);
  resynth.samples.resize(w.size());
  EXPECT_GT(testing::envelope_correlation(frames, analyze(resynth, cfg),
                                          active_frames(w, cfg), true),
            0.8);
}

TEST(ProsodyMatchedNoise, SilentInputStaysBelowFloor) {
  const VocoderConfig cfg;
  const auto w = testing::silence(1.0);
  const auto out = prosody_matched_noise(analyze(w, cfg), w, PmVariant::kMatchBoth, 2);
  EXPECT_LT(amplitude_db(rms(out.samples)), cfg.energy_floor_db);
}

TEST(ProsodyMatchedNoise, RejectsMismatchedFrames) {
  const VocoderConfig cfg;
  const auto w = testing::vibrato_vowel(1.0, 150, 5, 5);
  const auto frames = analyze(w, cfg);
  const auto longer = testing::vibrato_vowel(1.2, 150, 5, 5);
  EXPECT_THROW(prosody_matched_noise(frames, longer, PmVariant::kMatchBoth, 1), Error);
}

TEST(ProsodyMatchedNoise, VariantsFlattenOneContour) {
  const VocoderConfig cfg;
  const auto w = testing::speech_like(4.0, 130, 17);
  const auto frames = analyze(w, cfg);
  const auto orig_std = testing::stddev(testing::voiced_f0(frames));

  const auto fp = prosody_matched_noise(frames, w, PmVariant::kFlatPitch, 3);
  EXPECT_LT(testing::stddev(testing::voiced_f0(analyze(fp, cfg))), 0.1 * orig_std);

  const auto fi = prosody_matched_noise(frames, w, PmVariant::kFlatIntensity, 3);
  EXPECT_LT(active_rms_std(fi, w, cfg), 1.5);
  EXPECT_LT(testing::voiced_rmse(frames.f0, analyze(fi, cfg).f0), 5.0);
}

TEST(ProsodyMatchedNoise, DeterministicPerSeed) {
  const VocoderConfig cfg;
  const auto w = testing::vibrato_vowel(1.0, 150, 5, 5);
  const auto frames = analyze(w, cfg);
  const auto a = prosody_matched_noise(frames, w, PmVariant::kMatchBoth, 8);
  const auto b = prosody_matched_noise(frames, w, PmVariant::kMatchBoth, 8);
  const auto c = prosody_matched_noise(frames, w, PmVariant::kMatchBoth, 9);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

// --- babble, speech noise ------------------------------------------------------

TEST(Babble, SingleTalkerIsANormalizedExcerpt) {
  const auto src = testing::white_noise(0.5, 0.3, 12);
  const std::vector<Waveform> sources = {src};
  const auto out = make_babble(sources, 1, 1.2, 4);
  ASSERT_EQ(out.size(), static_cast<std::size_t>(1.2 * kFs));
  EXPECT_NEAR(rms(out.samples), 1.0, 1e-12);
  // Locate the offset from the first samples, then check the whole loop.
  std::size_t offset = src.size();
  for (std::size_t o = 0; o < src.size() && offset == src.size(); ++o) {
    const double k = src.samples[o] / out.samples[0];
    bool match = true;
    for (std::size_t s = 1; s < 16 && match; ++s) {
      match = std::abs(src.samples[(o + s) % src.size()] - k * out.samples[s]) < 1e-12;
    }
    if (match) offset = o;
  }
  ASSERT_LT(offset, src.size());
  const double k = src.samples[offset] / out.samples[0];
  for (std::size_t s = 0; s < out.size(); ++s) {
    ASSERT_NEAR(src.samples[(offset + s) % src.size()], k * out.samples[s], 1e-12);
  }
}

TEST(Babble, DeterministicAndValidated) {
  std::vector<Waveform> sources;
  for (int k = 0; k < 3; ++k) sources.push_back(testing::white_noise(0.3, 0.1, 20 + k));
  EXPECT_EQ(make_babble(sources, 2, 1.0, 3).samples,
            make_babble(sources, 2, 1.0, 3).samples);
  EXPECT_THROW(make_babble(sources, 4, 1.0, 3), Error);
  EXPECT_THROW(make_babble(sources, 0, 1.0, 3), Error);
  sources.push_back(testing::silence(0.2));
  EXPECT_THROW(make_babble(sources, 4, 1.0, 3), Error);
}

TEST(Babble, SixTonesAllPresent) {
  const std::vector<double> freqs = {300, 550, 900, 1400, 2100, 3300};
  std::vector<Waveform> sources;
  for (double f : freqs) sources.push_back(testing::sine(f, 1.0, 0.2));
  const auto out = make_babble(sources, 6, 2.0, 77);
  EXPECT_NEAR(rms(out.samples), 1.0, 1e-12);
  for (double f : freqs) {
    // A unit-RMS mix of six equal tones puts 1/6 of the power in each.
    const double p = testing::tone_power(out, f);
    EXPECT_GT(p, 0.5 * (1.0 / 6.0) / 2.0) << f;  // amplitude^2 / 4 convention
    EXPECT_LT(testing::tone_power(out, f + 125.0), 1e-3 * p) << f;
  }
}

TEST(SpeechNoise, PicksOneSourceAndNormalizes) {
  std::vector<Waveform> sources = {testing::sine(200, 0.4, 0.3), testing::sine(700, 0.4, 0.3)};
  const auto out = make_speech_noise(sources, 1.0, 5);
  EXPECT_NEAR(rms(out.samples), 1.0, 1e-3);
  const double p200 = testing::tone_power(out, 200), p700 = testing::tone_power(out, 700);
  EXPECT_TRUE((p200 > 0.1 && p700 < 1e-4) || (p700 > 0.1 && p200 < 1e-4));
  EXPECT_THROW(make_speech_noise({}, 1.0, 5), Error);
}

// --- SNR mixing -----------------------------------------------------------------

struct MixCase {
  Waveform speech;
  Waveform noise;
  std::vector<bool> active;
};

MixCase flat_mix_case() {
  const VocoderConfig cfg;
  MixCase c;
  c.speech = testing::sine(440, 1.0, 0.1 * std::sqrt(2.0));  // RMS 0.1
  c.noise = testing::sine(1000, 1.0, 0.1 * std::sqrt(2.0));
  c.active.assign(frame_count_for(c.speech.size(), cfg, kFs), true);
  return c;
}

TEST(MixAtSnr, GainFollowsTheTarget) {
  const auto c = flat_mix_case();
  EXPECT_NEAR(mix_at_snr(c.speech, c.noise, 0.0, c.active).noise_gain, 1.0, 1e-3);
  EXPECT_NEAR(mix_at_snr(c.speech, c.noise, 20.0, c.active).noise_gain, 0.1, 1e-4);
  EXPECT_NEAR(mix_at_snr(c.speech, c.noise, -10.0, c.active).noise_gain, 3.1623, 1e-3);
}

TEST(MixAtSnr, RealizedSnrOnTheGrid) {
  const VocoderConfig cfg;
  const auto speech = testing::speech_like(4.0, 120, 55);
  const auto active = active_frames(speech, cfg);
  const auto mask = sample_mask(active, speech.size(), cfg.hop_samples(kFs));
  const auto noise = pink_noise(1.3, kFs, 8);  // shorter: exercises looping
  for (int k = 0; k <= 8; ++k) {
    const double snr = -10.0 + 2.5 * k;
    const auto r = mix_at_snr(speech, noise, snr, active, cfg);
    EXPECT_LE(peak_abs(r.mixed.samples), 1.0);
    // Recover the two parts from the output and measure independently.
    std::vector<double> s(speech.size()), n(speech.size());
    for (std::size_t i = 0; i < speech.size(); ++i) {
      s[i] = r.output_scale * speech.samples[i];
      n[i] = r.mixed.samples[i] - s[i];
    }
    double ps = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!mask[i]) continue;
      ps += s[i] * s[i];
      pn += n[i] * n[i];
    }
    EXPECT_NEAR(10.0 * std::log10(ps / pn), snr, 0.5) << snr;
  }
}

TEST(MixAtSnr, RejectsUndefinedSnr) {
  const VocoderConfig cfg;
  const auto c = flat_mix_case();
  const auto quiet = testing::silence(1.0);
  EXPECT_THROW(mix_at_snr(quiet, c.noise, 0.0, c.active), Error);
  EXPECT_THROW(mix_at_snr(c.speech, quiet, 0.0, c.active), Error);
  EXPECT_THROW(mix_at_snr(c.speech, c.noise, NAN, c.active), Error);
  std::vector<bool> short_mask(c.active.size() - 1, true);
  EXPECT_THROW(mix_at_snr(c.speech, c.noise, 0.0, short_mask), Error);
  auto other_rate = c.noise;
  other_rate.sample_rate_hz = 8000;
  EXPECT_THROW(mix_at_snr(c.speech, other_rate, 0.0, c.active), Error);
  const std::vector<bool> none(c.active.size(), false);
  EXPECT_THROW(mix_at_snr(c.speech, c.noise, 0.0, none), Error);
}

TEST(MixAtSnr, FitLengthLoops) {
  const std::vector<double> n = {1, 2, 3};
  EXPECT_EQ(fit_length(n, 7), (std::vector<double>{1, 2, 3, 1, 2, 3, 1}));
  EXPECT_EQ(fit_length(n, 2), (std::vector<double>{1, 2}));
}

// --- conditions ------------------------------------------------------------------

TEST(Condition, TableCellsParseAndRoundTrip) {
  const auto cells = table_conditions();
  ASSERT_EQ(cells.size(), 7u);
  for (const auto& name : cells) EXPECT_EQ(condition_name(parse_condition(name)), name);
  const auto pm = parse_condition("noise-pi");
  EXPECT_EQ(pm.lexical, Keep::kRemoved);
  EXPECT_EQ(pm.noise, NoiseKind::kProsodyMatched);
  const auto fpi = parse_condition("flat-pi");
  EXPECT_EQ(fpi.lexical, Keep::kPreserved);
  EXPECT_EQ(fpi.pitch, Contour::kFlattened);
  EXPECT_EQ(fpi.intensity, Contour::kFlattened);
  EXPECT_EQ(parse_condition("noise-p").intensity, Contour::kFlattened);
  EXPECT_EQ(parse_condition("noise-i").pitch, Contour::kFlattened);
}

TEST(Condition, NoiseWithSnr) {
  const auto b = parse_condition("babble@-7.5", 3);
  EXPECT_EQ(b.noise, NoiseKind::kBabble);
  EXPECT_DOUBLE_EQ(*b.snr_db, -7.5);
  EXPECT_EQ(b.seed, 3u);
  EXPECT_EQ(condition_name(b), "babble@-7.5");
  const auto mixed = parse_condition("noise-pi@0");
  EXPECT_EQ(mixed.lexical, Keep::kPreserved);
  EXPECT_EQ(condition_name(mixed), "noise-pi@0");
  EXPECT_EQ(condition_name(parse_condition("music+flat-p@5")), "music+flat-p@5");
}

TEST(Condition, InconsistentSpecsRejected) {
  EXPECT_THROW(parse_condition("babble"), Error);        // noise needs an SNR
  EXPECT_THROW(parse_condition("flat-p@3"), Error);      // SNR without noise
  EXPECT_THROW(parse_condition("whisper"), Error);
  EXPECT_THROW(parse_condition("babble@loud"), Error);
  EXPECT_THROW(parse_condition("babble+flat-x@0"), Error);
  ConditionSpec s;
  s.lexical = Keep::kRemoved;
  EXPECT_THROW(s.validate(), Error);  // removal needs prosody-matched noise
  s.noise = NoiseKind::kProsodyMatched;
  s.pitch = Contour::kFlattened;
  s.intensity = Contour::kFlattened;
  EXPECT_THROW(s.validate(), Error);
}

// --- apply_condition --------------------------------------------------------------

struct Session {
  std::array<Waveform, 2> audio;
  std::vector<WordToken> words;
};

Session session(std::uint64_t seed) {
  Session s;
  s.audio[0] = testing::speech_like(4.0, 110, seed);
  s.audio[1] = testing::speech_like(4.0, 190, seed + 1);
  s.words = {{"a", 0.1, 1.9, 0}, {"b", 2.0, 3.9, 0}, {"c", 0.1, 3.9, 1}};
  return s;
}

TEST(ApplyCondition, CleanIsBitIdentical) {
  const auto s = session(1);
  const auto out = apply_condition(s.audio, s.words, parse_condition("clean"));
  EXPECT_EQ(out[0].samples, s.audio[0].samples);
  EXPECT_EQ(out[1].samples, s.audio[1].samples);
}

TEST(ApplyCondition, ProsodyMatchedNoiseRemovesLexicalContent) {
  const VocoderConfig cfg;
  const auto s = session(2);
  const auto out = apply_condition(s.audio, s.words, parse_condition("noise-pi", 5));
  for (int c = 0; c < 2; ++c) {
    const auto& w = s.audio[static_cast<std::size_t>(c)];
    const auto a = analyze(w, cfg);
    const auto b = analyze(out[static_cast<std::size_t>(c)], cfg);
    EXPECT_LT(testing::voiced_rmse(a.f0, b.f0), 5.0) << c;
    EXPECT_LT(testing::envelope_correlation(a, b, active_frames(w, cfg), true), 0.3) << c;
  }
}

TEST(ApplyCondition, FlatPitchAndIntensity) {
  const VocoderConfig cfg;
  const auto s = session(3);
  ManipulateOptions opt;
  opt.scope = MeanScope::kWhole;
  const auto out = apply_condition(s.audio, s.words, parse_condition("flat-pi", 5), {}, opt);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto before = testing::stddev(testing::voiced_f0(analyze(s.audio[c], cfg)));
    const auto after = testing::stddev(testing::voiced_f0(analyze(out[c], cfg)));
    EXPECT_LT(after, 0.1 * before) << c;
    EXPECT_LT(active_rms_std(out[c], s.audio[c], cfg), 1.5) << c;
  }
}

TEST(ApplyCondition, ChannelsAreIndependent) {
  auto s = session(4);
  const auto spec = parse_condition("noise-pi", 11);
  const auto first = apply_condition(s.audio, s.words, spec);
  s.audio[0] = testing::speech_like(4.0, 150, 99);
  const auto second = apply_condition(s.audio, s.words, spec);
  EXPECT_EQ(first[1].samples, second[1].samples);
  EXPECT_NE(first[0].samples, second[0].samples);
}

TEST(ApplyCondition, BackgroundNoiseAtSnr) {
  const VocoderConfig cfg;
  const auto s = session(5);
  NoiseBank bank;
  for (int k = 0; k < 6; ++k) bank.babble_sources.push_back(testing::speech_like(2.0, 100 + 15 * k, 40 + k));
  const auto out = apply_condition(s.audio, s.words, parse_condition("babble@5", 2), bank);
  for (std::size_t c = 0; c < 2; ++c) {
    ASSERT_EQ(out[c].size(), s.audio[c].size());
    EXPECT_NE(out[c].samples, s.audio[c].samples);
  }
  EXPECT_THROW(apply_condition(s.audio, s.words, parse_condition("music@0"), bank), Error);
}

// --- mixed training plan -----------------------------------------------------------

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

TEST(MixPlan, QuarterManipulatedAtZeroDb) {
  const auto plan = plan_mixed_training(ids(100), 0.75, 9);
  EXPECT_EQ(plan.manipulated_count(), 25u);
  for (const auto& a : plan.sessions) {
    if (a.condition == "clean") {
      EXPECT_FALSE(a.snr_db);
    } else {
      EXPECT_EQ(a.condition, "noise-pi");
      EXPECT_EQ(*a.snr_db, 0.0);
    }
  }
}

TEST(MixPlan, ProportionWithinOneSession) {
  for (int n : {1, 3, 7, 10, 33}) {
    for (double cf : {0.1, 0.5, 0.75, 0.9}) {
      const auto plan = plan_mixed_training(ids(n), cf, 1);
      EXPECT_LE(std::abs(static_cast<double>(plan.manipulated_count()) - (1 - cf) * n), 1.0);
    }
  }
}

TEST(MixPlan, DeterministicAndSeeded) {
  const auto a = plan_mixed_training(ids(40), 0.75, 9);
  const auto b = plan_mixed_training(ids(40), 0.75, 9);
  const auto c = plan_mixed_training(ids(40), 0.75, 10);
  std::ostringstream sa, sb, sc;
  write_mix_plan_csv(sa, a);
  write_mix_plan_csv(sb, b);
  write_mix_plan_csv(sc, c);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(sa.str(), sc.str());
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "session_id,condition,snr_db,seed");
}

TEST(MixPlan, RejectsBadInput) {
  EXPECT_THROW(plan_mixed_training({}, 0.75, 1), Error);
  EXPECT_THROW(plan_mixed_training(ids(4), 1.0, 1), Error);
  EXPECT_THROW(plan_mixed_training(ids(4), 0.0, 1), Error);
  const std::vector<std::string> dup = {"a", "b", "a"};
  EXPECT_THROW(plan_mixed_training(dup, 0.5, 1), Error);
  EXPECT_THROW(plan_mixed_training(ids(4), 0.5, 1, "whisper"), Error);
}

}  // namespace
}  // namespace cueprobe
