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

#include "cueprobe/prosody_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace cueprobe {
namespace {

constexpr double kFinalS = 0.2;
constexpr const char* kModelMagic = "cueprobe-prosody-model";
constexpr int kModelVersion = 1;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Least-squares slope of y on t; 0 with fewer than two distinct times.
double slope(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() < 2) return 0.0;
  const double mt = mean(t), my = mean(y);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - mt) * (y[i] - my);
    den += (t[i] - mt) * (t[i] - mt);
  }
  return den > 0.0 ? num / den : 0.0;
}

struct Series {
  std::vector<double> t, v;          // whole window
  std::vector<double> head, tail;    // before / inside the final 200 ms
};

double final_delta(const Series& s) {
  if (s.head.empty() || s.tail.empty()) return 0.0;
  return mean(s.tail) - mean(s.head);
}

double sigmoid(double a) {
  return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}

// log(1 + exp(a)) without overflow.
double softplus(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

std::vector<double> standardise(const LogisticModel& m, const std::vector<double>& x) {
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - m.mean[j]) / m.scale[j];
  return z;
}

}  // namespace

const std::array<const char*, kProsodyFeatureCount>& prosody_feature_names() {
  static const std::array<const char*, kProsodyFeatureCount> names = {
      "voiced_ratio",      "f0_mean_st",        "f0_slope_st_per_s",
      "f0_final_delta_st", "intensity_mean_db", "intensity_slope_db_per_s",
      "intensity_final_delta_db", "pause_fraction", "covered_s"};
  return names;
}

std::vector<double> frame_level_db(const VocoderFrames& frames) {
  std::vector<double> out(frames.frame_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = envelope_power(frames.envelope.power[i], frames.envelope.fft_size);
    out[i] = 10.0 * std::log10(std::max(p, 1e-30));
  }
  return out;
}

SpeakerStats speaker_stats(const VocoderFrames& frames) {
  const auto level = frame_level_db(frames);
  std::vector<double> f0, active;
  for (std::size_t i = 0; i < level.size(); ++i) {
    if (frames.f0.f0_hz[i] > 0.0) f0.push_back(frames.f0.f0_hz[i]);
    if (level[i] > frames.config.energy_floor_db) active.push_back(level[i]);
  }
  return {median(f0), median(active)};
}

ProsodyFeatures extract_features(const VocoderFrames& frames, const VadTrack& vad,
                                 int channel, double t_s, double window_s) {
  return extract_features(frames, speaker_stats(frames), vad, channel, t_s, window_s);
}

ProsodyFeatures extract_features(const VocoderFrames& frames, const SpeakerStats& stats,
                                 const VadTrack& vad, int channel, double t_s,
                                 double window_s) {
  if (channel != 0 && channel != 1) throw Error("extract_features: channel must be 0 or 1");
  if (!(window_s > 0.0)) throw Error("extract_features: window must be positive");
  const double period = frames.config.frame_period_ms / 1000.0;
  const double span = static_cast<double>(frames.frame_count()) * period;
  if (!(t_s > 0.0) || t_s - window_s >= span || t_s > span + period) {
    throw Error(fmt::format("extract_features: window ending at {:.3f} s is outside the "
                            "{:.3f} s session", t_s, span));
  }
  const auto first = static_cast<std::size_t>(
      std::max(0.0, std::ceil((t_s - window_s) / period - 1e-9)));
  const auto last = std::min<std::size_t>(
      frames.frame_count(), static_cast<std::size_t>(std::ceil(t_s / period - 1e-9)));
  if (first >= last) throw Error("extract_features: window holds no frames");

  const auto level = frame_level_db(frames);
  const double tail_from = t_s - kFinalS;
  Series pitch, inten;
  std::size_t voiced = 0, paused = 0;
  const auto& act = vad.active[static_cast<std::size_t>(channel)];
  for (std::size_t i = first; i < last; ++i) {
    const double t = static_cast<double>(i) * period;
    const auto vf = static_cast<std::size_t>(std::floor(t * VadTrack::kFrameRateHz + 1e-9));
    if (vf >= act.size() || !act[vf]) ++paused;
    const double f0 = frames.f0.f0_hz[i];
    if (f0 > 0.0 && stats.f0_median_hz > 0.0) {
      ++voiced;
      const double st = 12.0 * std::log2(f0 / stats.f0_median_hz);
      pitch.t.push_back(t);
      pitch.v.push_back(st);
      (t >= tail_from ? pitch.tail : pitch.head).push_back(st);
    }
    if (level[i] > frames.config.energy_floor_db) {
      const double db = level[i] - stats.level_median_db;
      inten.t.push_back(t);
      inten.v.push_back(db);
      (t >= tail_from ? inten.tail : inten.head).push_back(db);
    }
  }
  const double n = static_cast<double>(last - first);
  ProsodyFeatures f;
  f.values = {static_cast<double>(voiced) / n,
              mean(pitch.v),
              slope(pitch.t, pitch.v),
              final_delta(pitch),
              mean(inten.v),
              slope(inten.t, inten.v),
              final_delta(inten),
              static_cast<double>(paused) / n,
              n * period};
  return f;
}

double logistic_loss(const std::vector<std::vector<double>>& z,
                     const std::vector<bool>& labels, const std::vector<double>& w,
                     double b, double l2, std::vector<double>* grad_w, double* grad_b) {
  const double n = static_cast<double>(z.size());
  double loss = 0.0, gb = 0.0;
  std::vector<double> gw(w.size(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    double a = b;
    for (std::size_t j = 0; j < w.size(); ++j) a += w[j] * z[i][j];
    // -log p(y | a) = softplus(a) - y * a
    loss += softplus(a) - (labels[i] ? a : 0.0);
    const double r = sigmoid(a) - (labels[i] ? 1.0 : 0.0);
    gb += r;
    for (std::size_t j = 0; j < w.size(); ++j) gw[j] += r * z[i][j];
  }
  double penalty = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    penalty += w[j] * w[j];
    gw[j] = gw[j] / n + l2 * w[j];
  }
  if (grad_w) *grad_w = std::move(gw);
  if (grad_b) *grad_b = gb / n;
  return loss / n + 0.5 * l2 * penalty;
}

LogisticModel train_logistic(const std::vector<std::vector<double>>& x,
                             const std::vector<bool>& labels, const TrainOptions& options,
                             std::vector<double>* loss_trace) {
  if (x.size() != labels.size()) throw Error("train_logistic: rows and labels differ");
  if (x.empty()) throw Error("train_logistic: no data");
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error("train_logistic: both classes are needed");
  }
  if (options.epochs < 0 || !(options.learning_rate > 0.0) || options.l2 < 0.0) {
    throw Error("train_logistic: bad hyperparameters");
  }
  const std::size_t d = x.front().size();
  for (const auto& row : x) {
    if (row.size() != d) throw Error("train_logistic: ragged feature rows");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error("train_logistic: non-finite feature");
    }
  }
  LogisticModel m;
  m.options = options;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 0.0);
  const double n = static_cast<double>(x.size());
  for (const auto& row : x) {
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += row[j] / n;
  }
  for (const auto& row : x) {
    for (std::size_t j = 0; j < d; ++j) m.scale[j] += (row[j] - m.mean[j]) * (row[j] - m.mean[j]) / n;
  }
  for (double& s : m.scale) s = s > 1e-24 ? std::sqrt(s) : 1.0;
  m.weights.assign(d, 0.0);

  std::vector<std::vector<double>> z;
  z.reserve(x.size());
  for (const auto& row : x) z.push_back(standardise(m, row));
  std::vector<double> gw;
  double gb = 0.0;
  if (loss_trace) loss_trace->clear();
  for (int e = 0; e < options.epochs; ++e) {
    const double loss = logistic_loss(z, labels, m.weights, m.bias, options.l2, &gw, &gb);
    if (loss_trace) loss_trace->push_back(loss);
    for (std::size_t j = 0; j < d; ++j) m.weights[j] -= options.learning_rate * gw[j];
    m.bias -= options.learning_rate * gb;
  }
  if (loss_trace) loss_trace->push_back(logistic_loss(z, labels, m.weights, m.bias, options.l2));
  return m;
}

double predict(const LogisticModel& model, const std::vector<double>& x) {
  if (x.size() != model.features()) {
    throw Error(fmt::format("predict: {} features given, model has {}", x.size(),
                            model.features()));
  }
  const auto z = standardise(model, x);
  double a = model.bias;
  for (std::size_t j = 0; j < z.size(); ++j) a += model.weights[j] * z[j];
  return sigmoid(a);
}

double predict(const LogisticModel& model, const ProsodyFeatures& f) {
  return predict(model, std::vector<double>(f.values.begin(), f.values.end()));
}

void write_model(std::ostream& os, const LogisticModel& m) {
  auto line = [&os](const char* key, const std::vector<double>& v) {
    os << key;
    for (double x : v) os << fmt::format(" {:.17g}", x);
    os << '\n';
  };
  os << kModelMagic << ' ' << kModelVersion << '\n';
  os << "features";
  if (m.features() == kProsodyFeatureCount) {
    for (const char* name : prosody_feature_names()) os << ' ' << name;
  } else {
    for (std::size_t j = 0; j < m.features(); ++j) os << " x" << j;
  }
  os << '\n';
  line("mean", m.mean);
  line("scale", m.scale);
  line("weights", m.weights);
  os << fmt::format("bias {:.17g}\n", m.bias);
  os << fmt::format("learning_rate {:.17g}\nl2 {:.17g}\nepochs {}\nseed {}\n",
                    m.options.learning_rate, m.options.l2, m.options.epochs,
                    m.options.seed);
}

LogisticModel read_model(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != kModelMagic) throw Error("prosody model: bad magic");
  if (version != kModelVersion) {
    throw Error(fmt::format("prosody model: unsupported version {}", version));
  }
  std::string rest;
  std::getline(is, rest);
  auto read_line = [&is](const std::string& key) {
    std::string line;
    if (!std::getline(is, line)) throw Error("prosody model: missing '" + key + "'");
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) throw Error("prosody model: expected '" + key + "', got '" + k + "'");
    std::vector<std::string> out;
    std::string tok;
    while (ls >> tok) out.push_back(tok);
    return out;
  };
  auto numbers = [](const std::vector<std::string>& toks) {
    std::vector<double> v;
    for (const auto& t : toks) {
      try {
        v.push_back(std::stod(t));
      } catch (const std::exception&) {
        throw Error("prosody model: bad number '" + t + "'");
      }
    }
    return v;
  };
  auto one = [&](const std::string& key) {
    const auto v = read_line(key);
    if (v.size() != 1) throw Error("prosody model: '" + key + "' takes one value");
    return v.front();
  };
  LogisticModel m;
  const auto names = read_line("features");
  m.mean = numbers(read_line("mean"));
  m.scale = numbers(read_line("scale"));
  m.weights = numbers(read_line("weights"));
  m.bias = numbers({one("bias")}).front();
  m.options.learning_rate = numbers({one("learning_rate")}).front();
  m.options.l2 = numbers({one("l2")}).front();
  m.options.epochs = std::stoi(one("epochs"));
  m.options.seed = std::stoull(one("seed"));
  if (m.mean.size() != names.size() || m.scale.size() != names.size() ||
      m.weights.size() != names.size()) {
    throw Error("prosody model: vector lengths disagree with the feature list");
  }
  for (double s : m.scale) {
    if (!(s > 0.0)) throw Error("prosody model: non-positive scale");
  }
  return m;
}

void write_model(const std::filesystem::path& path, const LogisticModel& model) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_model(os, model);
  if (!os) throw Error("failed writing " + path.string());
}

LogisticModel read_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  try {
    return read_model(is);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::vector<FeatureRow> session_features(const std::string& session_id,
                                         const std::array<VocoderFrames, 2>& frames,
                                         const VadTrack& vad,
                                         const std::vector<TurnEvent>& events,
                                         double window_s) {
  const std::array<SpeakerStats, 2> stats = {speaker_stats(frames[0]),
                                             speaker_stats(frames[1])};
  std::vector<FeatureRow> rows;
  for (const auto& e : events) {
    FeatureRow r;
    r.session_id = session_id;
    r.channel = e.prev_speaker;
    r.t_s = e.silence_start_s;
    r.shift = e.kind == TurnKind::kShift;
    const auto c = static_cast<std::size_t>(e.prev_speaker);
    r.features = extract_features(frames[c], stats[c], vad, e.prev_speaker, r.t_s, window_s);
    rows.push_back(r);
  }
  return rows;
}

void write_features_csv(std::ostream& os, const std::vector<FeatureRow>& rows, bool header) {
  if (header) {
    os << "session_id,channel,t_s,label";
    for (const char* name : prosody_feature_names()) os << ',' << name;
    os << '\n';
  }
  for (const auto& r : rows) {
    os << fmt::format("{},{},{:.2f},{}", r.session_id, r.channel, r.t_s,
                      r.shift ? "shift" : "hold");
    for (double v : r.features.values) os << fmt::format(",{:.9g}", v);
    os << '\n';
  }
}

// --- synthetic corpus -------------------------------------------------------

namespace {

struct Turn {
  int speaker = 0;
  long start = 0, end = 0;  // 10 ms frames
  bool cue_shift = false;    // planted ending
  bool cued = false;         // false for the final turn
};

// Formant-coloured spectral shape scaled to a given frame power.
std::vector<double> envelope_for(std::size_t fft_size, int sample_rate_hz, double f1,
                                 double f2, double power) {
  const std::size_t bins = fft_size / 2 + 1;
  std::vector<double> env(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate_hz / static_cast<double>(fft_size);
    auto peak = [f](double c, double bw) {
      const double d = (f - c) / bw;
      return 1.0 / (1.0 + d * d);
    };
    const double tilt = 1.0 / (1.0 + f / 1500.0);
    env[k] = (0.01 + peak(f1, 90.0) + 0.5 * peak(f2, 130.0)) * tilt;
  }
  const double p = envelope_power(env, fft_size);
  for (double& v : env) v *= power / p;
  return env;
}

}  // namespace

std::vector<SynthSession> synth_cue_corpus(int n_sessions, std::uint64_t seed,
                                           const CueCorpusOptions& options) {
  if (n_sessions < 1) throw Error("synth_cue_corpus: need at least one session");
  if (options.events_per_session < 1 || options.shift_fraction < 0.0 ||
      options.shift_fraction > 1.0 || !(options.cue_s > 0.0) ||
      !(options.turn_min_s >= options.cue_s + 0.5) || options.turn_max_s < options.turn_min_s) {
    throw Error("synth_cue_corpus: bad options");
  }
  const VocoderConfig cfg;
  const int fs = kPipelineSampleRate;
  const double period = cfg.frame_period_ms / 1000.0;
  const auto cue_frames = static_cast<long>(std::lround(options.cue_s / period));
  static const char* kSyllables[] = {"ba", "ko", "mi", "ta", "ne", "lu", "so", "ri"};
  static const double kFormants[][2] = {{730, 1090}, {270, 2290}, {300, 870},
                                        {530, 1840}, {570, 840},  {660, 1720}};

  std::vector<SynthSession> out;
  std::mt19937_64 rng(seed);
  for (int s = 0; s < n_sessions; ++s) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto frames_of = [](double lo, double hi, double x) {
      return static_cast<long>(std::lround((lo + (hi - lo) * x) * 100.0));
    };
    const int n_events = options.events_per_session;
    const auto n_shift = static_cast<int>(std::lround(options.shift_fraction * n_events));
    std::vector<bool> shifts(static_cast<std::size_t>(n_events), false);
    std::fill(shifts.begin(), shifts.begin() + n_shift, true);
    std::shuffle(shifts.begin(), shifts.end(), rng);

    // Turns on the 10 ms grid.
    std::vector<Turn> turns;
    long t = 30;
    int speaker = static_cast<int>(rng() % 2);
    for (int k = 0; k <= n_events; ++k) {
      Turn turn;
      turn.speaker = speaker;
      turn.start = t;
      turn.end = t + frames_of(options.turn_min_s, options.turn_max_s, u(rng));
      turn.cued = k < n_events;
      turn.cue_shift = turn.cued && shifts[static_cast<std::size_t>(k)];
      turns.push_back(turn);
      t = turn.end + frames_of(0.35, 0.7, u(rng));
      if (turn.cue_shift) speaker = 1 - speaker;
    }
    const long n_frames = turns.back().end + 30;

    SynthSession session;
    session.id = fmt::format("synth{:03d}", s);
    session.duration_s = static_cast<double>(n_frames) / 100.0;
    std::array<VocoderFrames, 2> frames;
    const std::array<double, 2> base_hz = {110.0 + 20.0 * u(rng), 190.0 + 30.0 * u(rng)};
    const std::array<double, 2> base_db = {-24.0 + 2.0 * u(rng), -24.0 + 2.0 * u(rng)};
    for (auto& f : frames) {
      f.config = cfg;
      f.sample_rate_hz = fs;
      f.f0.frame_period_ms = cfg.frame_period_ms;
      f.f0.f0_hz.assign(static_cast<std::size_t>(n_frames), 0.0);
      f.envelope.fft_size = cfg.fft_size;
      f.envelope.power.assign(static_cast<std::size_t>(n_frames),
                              std::vector<double>(cfg.fft_size / 2 + 1, floor_power(cfg)));
      f.aperiodicity.ratio.assign(static_cast<std::size_t>(n_frames), 1.0);
    }

    for (std::size_t k = 0; k < turns.size(); ++k) {
      const Turn& turn = turns[k];
      auto& f = frames[static_cast<std::size_t>(turn.speaker)];
      // Slow pitch and level drift over the turn, plus the planted ending.
      const double drift_phase = 2.0 * std::numbers::pi * u(rng);
      const double drift_rate = 0.3 + 0.4 * u(rng);
      const double fall_st = turn.cue_shift
          ? options.f0_fall_min_st + (options.f0_fall_max_st - options.f0_fall_min_st) * u(rng)
          : 0.0;
      const double drop_db = turn.cue_shift
          ? options.level_drop_min_db +
                (options.level_drop_max_db - options.level_drop_min_db) * u(rng)
          : 0.0;
      const double flat_st = turn.cued ? 0.5 * (u(rng) - 0.5) : 0.0;
      // Words tile the turn; the last word ends at the turn end.
      long w0 = turn.start;
      while (w0 < turn.end) {
        long w1 = std::min(turn.end, w0 + frames_of(0.22, 0.38, u(rng)));
        if (turn.end - w1 < 15) w1 = turn.end;
        const auto& fm = kFormants[rng() % 6];
        WordToken word;
        word.text = std::string(kSyllables[rng() % 8]) + kSyllables[rng() % 8];
        word.start_s = static_cast<double>(w0) / 100.0;
        word.end_s = static_cast<double>(w1) / 100.0;
        word.channel = turn.speaker;
        session.words.push_back(word);
        for (long i = w0; i < w1; ++i) {
          const double tt = static_cast<double>(i - turn.start) * period;
          double st = 1.5 * std::sin(2.0 * std::numbers::pi * drift_rate * tt + drift_phase);
          double db = 2.0 * std::sin(2.0 * std::numbers::pi * 0.5 * drift_rate * tt);
          const long into_cue = i - (turn.end - cue_frames);
          if (turn.cued && into_cue >= 0) {
            const double a = static_cast<double>(into_cue + 1) / static_cast<double>(cue_frames);
            st = st * (1.0 - a) - a * fall_st + a * flat_st;
            db = db * (1.0 - a) - a * drop_db;
          }
          // Syllable-internal ramps keep onsets smooth.
          const double ramp = std::min({1.0, (i - w0 + 1) / 3.0, (w1 - i) / 3.0});
          const auto fi = static_cast<std::size_t>(i);
          f.f0.f0_hz[fi] = base_hz[static_cast<std::size_t>(turn.speaker)] *
                           std::pow(2.0, st / 12.0);
          f.envelope.power[fi] = envelope_for(
              cfg.fft_size, fs, fm[0], fm[1],
              std::pow(10.0, (base_db[static_cast<std::size_t>(turn.speaker)] + db) / 10.0) *
                  ramp * ramp);
          f.aperiodicity.ratio[fi] = 0.1;
        }
        w0 = w1 + (w1 < turn.end ? frames_of(0.04, 0.08, u(rng)) : 0);
      }
      if (turn.cued) {
        const Turn& next = turns[k + 1];
        TurnEvent e;
        e.kind = turn.cue_shift ? TurnKind::kShift : TurnKind::kHold;
        e.silence_start_s = static_cast<double>(turn.end) / 100.0;
        e.silence_end_s = static_cast<double>(next.start) / 100.0;
        e.prev_speaker = turn.speaker;
        e.next_speaker = next.speaker;
        session.events.push_back(e);
      }
    }
    std::sort(session.words.begin(), session.words.end(),
              [](const WordToken& a, const WordToken& b) { return a.start_s < b.start_s; });
    for (int c = 0; c < 2; ++c) {
      session.channels[static_cast<std::size_t>(c)] =
          synthesize(frames[static_cast<std::size_t>(c)], rng());
    }
    out.push_back(std::move(session));
  }
  return out;
}

}  // namespace cueprobe
