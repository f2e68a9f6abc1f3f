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

#include "cueprobe/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cueprobe/audio.hpp"
#include "cueprobe/sidecar.hpp"

namespace cueprobe {
namespace {

constexpr std::uint32_t kStreamVersion = 1;

double frame_index(double t_s, double rate) {
  return std::ceil(t_s * rate - 1e-9);
}

std::string snr_text(const std::optional<double>& snr) {
  return snr ? fmt::format("{:g}", *snr) : std::string();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(fmt::format("{}: '{}' is not a number", what, text));
  }
}

}  // namespace

void ProbabilityStream::validate() const {
  if (!(frame_rate_hz > 0.0) || !std::isfinite(frame_rate_hz)) {
    throw Error("probability stream: frame rate must be positive");
  }
  for (std::size_t j = 0; j < p_shift.size(); ++j) {
    if (!(p_shift[j] >= 0.0 && p_shift[j] <= 1.0)) {
      throw Error(fmt::format("probability stream: frame {} has p={} outside [0, 1]",
                              j, p_shift[j]));
    }
  }
}

FrameWindow score_window(double frame_rate_hz, double t_s, double window_ms) {
  FrameWindow w;
  w.begin = static_cast<std::ptrdiff_t>(
      frame_index(t_s - window_ms / 1000.0, frame_rate_hz));
  w.end = static_cast<std::ptrdiff_t>(frame_index(t_s, frame_rate_hz));
  return w;
}

std::optional<double> score_event(const ProbabilityStream& stream, double t_s,
                                  double window_ms) {
  if (!(window_ms > 0.0)) throw Error("score_event: window must be positive");
  const auto w = score_window(stream.frame_rate_hz, t_s, window_ms);
  if (w.begin < 0 || w.end > static_cast<std::ptrdiff_t>(stream.frames()) ||
      w.begin >= w.end) {
    return std::nullopt;
  }
  double sum = 0.0;
  for (auto j = w.begin; j < w.end; ++j) sum += stream.p_shift[static_cast<std::size_t>(j)];
  return sum;
}

std::optional<Anchor> parse_anchor(const std::string& name) {
  if (name == "pre-silence") return Anchor::kPreSilence;
  if (name == "in-silence") return Anchor::kInSilence;
  return std::nullopt;
}

const char* to_string(Anchor anchor) {
  return anchor == Anchor::kPreSilence ? "pre-silence" : "in-silence";
}

double anchor_time(const TurnEvent& event, Anchor anchor, double window_ms) {
  return anchor == Anchor::kPreSilence ? event.silence_start_s
                                       : event.silence_start_s + window_ms / 1000.0;
}

std::optional<MetricSet> parse_metric_set(const std::string& name) {
  if (name == "S-Pred") return MetricSet::kShiftPrediction;
  if (name == "S/H-Pred") return MetricSet::kShiftHold;
  return std::nullopt;
}

const char* to_string(MetricSet set) {
  return set == MetricSet::kShiftPrediction ? "S-Pred" : "S/H-Pred";
}

SessionScores score_session(const std::string& session_id,
                            const ProbabilityStream& stream,
                            std::span<const TurnEvent> events,
                            std::span<const MidTurnPoint> midturn, MetricSet set,
                            const ScoringOptions& options) {
  stream.validate();
  SessionScores out;
  auto add = [&](double t, bool shift) {
    const auto s = score_event(stream, t, options.window_ms);
    if (!s) {
      ++out.dropped;
      return;
    }
    out.events.push_back({session_id, t, *s, shift});
  };
  for (const auto& e : events) {
    const bool shift = e.kind == TurnKind::kShift;
    if (set == MetricSet::kShiftPrediction && !shift) continue;
    add(anchor_time(e, options.anchor, options.window_ms), shift);
  }
  if (set == MetricSet::kShiftPrediction) {
    for (const auto& p : midturn) add(p.t_s, false);
  }
  if (out.dropped > 0) {
    spdlog::info("{}: {} event(s) dropped, scoring window outside the stream",
                 session_id, out.dropped);
  }
  return out;
}

std::vector<double> threshold_grid(std::span<const double> scores) {
  double top = 0.0;
  for (double s : scores) top = std::max(top, s);
  std::vector<double> grid(101);
  for (int i = 0; i <= 100; ++i) grid[static_cast<std::size_t>(i)] = i / 100.0 * top;
  return grid;
}

namespace {

struct Confusion {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;
};

Confusion confusion(const std::vector<bool>& pred, const std::vector<bool>& truth) {
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      pred[i] ? ++c.tp : ++c.fn;
    } else {
      pred[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

ClassMetrics metrics_of(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), fn = static_cast<double>(c.fn);
  const double fp = static_cast<double>(c.fp), tn = static_cast<double>(c.tn);
  ClassMetrics m;
  m.f1_shift = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  m.f1_hold = ratio(2.0 * tn, 2.0 * tn + fn + fp);
  const double n_shift = tp + fn, n_hold = tn + fp;
  m.f1_weighted = ratio(n_shift * m.f1_shift + n_hold * m.f1_hold, n_shift + n_hold);
  double recall_sum = 0.0;
  int classes = 0;
  if (n_shift > 0) {
    recall_sum += tp / n_shift;
    ++classes;
  }
  if (n_hold > 0) {
    recall_sum += tn / n_hold;
    ++classes;
  }
  m.bal_acc = classes ? recall_sum / classes : 0.0;
  return m;
}

}  // namespace

double tune_threshold(std::span<const double> scores, const std::vector<bool>& shift) {
  if (scores.size() != shift.size()) {
    throw Error("tune_threshold: scores and labels differ in length");
  }
  const auto n_shift = static_cast<std::size_t>(std::count(shift.begin(), shift.end(), true));
  if (n_shift == 0 || n_shift == shift.size()) {
    throw Error("tune_threshold: validation set needs both classes");
  }
  // With both class sizes fixed, balanced accuracy orders like
  // tp * n_hold + tn * n_shift. Integers keep equal accuracies tied.
  const std::size_t n_hold = shift.size() - n_shift;
  const auto grid = threshold_grid(scores);
  double best = grid.front();
  std::size_t best_key = 0;
  bool first = true;
  std::vector<bool> pred(scores.size());
  for (double thr : grid) {
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= thr;
    const Confusion c = confusion(pred, shift);
    const std::size_t key = c.tp * n_hold + c.tn * n_shift;
    if (first || key > best_key) {
      best_key = key;
      best = thr;
      first = false;
    }
  }
  return best;
}

ClassMetrics classification_metrics(const std::vector<bool>& predicted_shift,
                                    const std::vector<bool>& true_shift) {
  if (predicted_shift.size() != true_shift.size()) {
    throw Error("classification_metrics: predictions and truth differ in length");
  }
  if (true_shift.empty()) throw Error("classification_metrics: empty input");
  return metrics_of(confusion(predicted_shift, true_shift));
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::vector<std::string> normalize_words(std::span<const std::string> words) {
  std::vector<std::string> out;
  auto word_char = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  for (const auto& w : words) {
    std::string cleaned;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto c = static_cast<unsigned char>(w[i]);
      if (word_char(c)) {
        cleaned += static_cast<char>(std::tolower(c));
      } else if (c == '\'' && i > 0 && i + 1 < w.size() &&
                 word_char(static_cast<unsigned char>(w[i - 1])) &&
                 word_char(static_cast<unsigned char>(w[i + 1]))) {
        cleaned += '\'';
      } else {
        cleaned += ' ';  // other punctuation separates
      }
    }
    for (auto& t : split_words(cleaned)) out.push_back(std::move(t));
  }
  return out;
}

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const auto r = normalize_words(ref);
  const auto h = normalize_words(hyp);
  if (r.empty()) throw Error("wer: reference has no words");
  return static_cast<double>(edit_distance(r, h)) / static_cast<double>(r.size());
}

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

double two_sided_p(double t, double df) {
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

TTestResult fold_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error("fold_ttest: each list needs at least two folds");
  }
  TTestResult r;
  double mean_diff = 0.0, se = 0.0;
  if (a.size() == b.size()) {
    r.kind = TTestKind::kPaired;
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    mean_diff = mean_of(d);
    se = std::sqrt(sample_var(d, mean_diff) / static_cast<double>(d.size()));
    r.df = static_cast<double>(d.size() - 1);
  } else {
    r.kind = TTestKind::kWelch;
    const double ma = mean_of(a), mb = mean_of(b);
    const double va = sample_var(a, ma) / static_cast<double>(a.size());
    const double vb = sample_var(b, mb) / static_cast<double>(b.size());
    mean_diff = ma - mb;
    se = std::sqrt(va + vb);
    const double den = va * va / static_cast<double>(a.size() - 1) +
                       vb * vb / static_cast<double>(b.size() - 1);
    r.df = den > 0.0 ? (va + vb) * (va + vb) / den
                     : static_cast<double>(a.size() + b.size() - 2);
  }
  if (!(se > 0.0)) {
    if (mean_diff == 0.0) {
      r.t = 0.0;
      r.p_two_sided = 1.0;
    } else {
      r.degenerate = true;
      r.t = std::copysign(std::numeric_limits<double>::infinity(), mean_diff);
      r.p_two_sided = 0.0;
    }
    return r;
  }
  r.t = mean_diff / se;
  r.p_two_sided = two_sided_p(r.t, r.df);
  return r;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = mean_of(values);
  s.ci_low = s.ci_high = s.mean;
  if (values.size() < 2) return s;
  s.std = std::sqrt(sample_var(values, s.mean));
  const boost::math::students_t dist(static_cast<double>(values.size() - 1));
  const double half = boost::math::quantile(dist, 0.975) * s.std /
                      std::sqrt(static_cast<double>(values.size()));
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  return s;
}

namespace {

std::vector<ReportAggregate> aggregate(std::span<const ReportRow> rows) {
  std::vector<ReportAggregate> out;
  std::vector<std::vector<const ReportRow*>> members;
  for (const auto& row : rows) {
    std::size_t k = 0;
    while (k < out.size() &&
           !(out[k].metric_set == row.metric_set && out[k].condition == row.condition &&
             out[k].snr_db == row.snr_db)) {
      ++k;
    }
    if (k == out.size()) {
      out.push_back({row.metric_set, row.condition, row.snr_db, {}, {}, {}, {}});
      members.emplace_back();
    }
    members[k].push_back(&row);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto collect = [&](double ClassMetrics::*field) {
      std::vector<double> v;
      for (const auto* r : members[k]) v.push_back(r->metrics.*field);
      return summarize(v);
    };
    out[k].bal_acc = collect(&ClassMetrics::bal_acc);
    out[k].f1_weighted = collect(&ClassMetrics::f1_weighted);
    out[k].f1_hold = collect(&ClassMetrics::f1_hold);
    out[k].f1_shift = collect(&ClassMetrics::f1_shift);
  }
  return out;
}

}  // namespace

EvalReport build_report(MetricSet set, std::span<const FoldScores> cells,
                        const std::string& config_hash) {
  EvalReport report;
  report.config_hash = config_hash;
  for (const auto& cell : cells) {
    const std::string where = fmt::format("condition {} snr {} fold {}", cell.condition,
                                          cell.snr_db ? snr_text(cell.snr_db) : "none",
                                          cell.fold);
    std::set<std::string> val_sessions;
    for (const auto& e : cell.validation) val_sessions.insert(e.session_id);
    for (const auto& e : cell.test) {
      if (val_sessions.count(e.session_id)) {
        throw Error(fmt::format("build_report ({}): session '{}' is in both validation "
                                "and test", where, e.session_id));
      }
    }
    if (cell.test.empty()) throw Error(fmt::format("build_report ({}): no test events", where));
    std::vector<double> vs;
    std::vector<bool> vl;
    for (const auto& e : cell.validation) {
      vs.push_back(e.score);
      vl.push_back(e.shift);
    }
    double thr = 0.0;
    try {
      thr = tune_threshold(vs, vl);
    } catch (const Error& e) {
      throw Error(fmt::format("build_report ({}): {}", where, e.what()));
    }
    std::vector<bool> pred, truth;
    ReportRow row;
    for (const auto& e : cell.test) {
      pred.push_back(e.score >= thr);
      truth.push_back(e.shift);
      e.shift ? ++row.n_shift : ++row.n_hold;
    }
    row.metric_set = set;
    row.condition = cell.condition;
    row.snr_db = cell.snr_db;
    row.fold = cell.fold;
    row.threshold = thr;
    row.metrics = classification_metrics(pred, truth);
    report.rows.push_back(row);
    report.dropped += cell.dropped;
  }
  report.aggregates = aggregate(report.rows);
  return report;
}

namespace {

constexpr const char* kReportHeader =
    "row_type,metric_set,condition,snr_db,fold,threshold,f1_weighted,f1_hold,"
    "f1_shift,bal_acc,n_shift,n_hold,bal_acc_std,bal_acc_ci_low,bal_acc_ci_high,"
    "n_folds,dropped,config_hash";

}  // namespace

void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << kReportHeader << '\n';
  for (const auto& r : report.rows) {
    os << fmt::format("fold,{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{},,,,,{},{}\n",
                      to_string(r.metric_set), r.condition, snr_text(r.snr_db), r.fold,
                      r.threshold, r.metrics.f1_weighted, r.metrics.f1_hold,
                      r.metrics.f1_shift, r.metrics.bal_acc, r.n_shift, r.n_hold,
                      report.dropped, report.config_hash);
  }
  for (const auto& a : report.aggregates) {
    os << fmt::format(
        "aggregate,{},{},{},,,{:.6f},{:.6f},{:.6f},{:.6f},,,{:.6f},{:.6f},{:.6f},{},{},{}\n",
        to_string(a.metric_set), a.condition, snr_text(a.snr_db), a.f1_weighted.mean,
        a.f1_hold.mean, a.f1_shift.mean, a.bal_acc.mean, a.bal_acc.std, a.bal_acc.ci_low,
        a.bal_acc.ci_high, a.bal_acc.n, report.dropped, report.config_hash);
  }
}

EvalReport read_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kReportHeader) {
    throw Error("report CSV: unexpected header");
  }
  EvalReport report;
  std::size_t line_no = 1;
  bool first = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    const std::string where = fmt::format("report CSV line {}", line_no);
    if (c.size() != 18) throw Error(where + ": expected 18 columns");
    const auto set = parse_metric_set(c[1]);
    if (!set) throw Error(where + ": unknown metric set '" + c[1] + "'");
    std::optional<double> snr;
    if (!c[3].empty()) snr = parse_double(c[3], where);
    if (first) {
      report.config_hash = c[17];
      report.dropped = static_cast<std::size_t>(parse_double(c[16], where));
      first = false;
    } else if (c[17] != report.config_hash) {
      throw Error(where + ": config hash differs within one report");
    }
    if (c[0] == "fold") {
      ReportRow r;
      r.metric_set = *set;
      r.condition = c[2];
      r.snr_db = snr;
      r.fold = static_cast<int>(parse_double(c[4], where));
      r.threshold = parse_double(c[5], where);
      r.metrics = {parse_double(c[6], where), parse_double(c[7], where),
                   parse_double(c[8], where), parse_double(c[9], where)};
      r.n_shift = static_cast<std::size_t>(parse_double(c[10], where));
      r.n_hold = static_cast<std::size_t>(parse_double(c[11], where));
      report.rows.push_back(r);
    } else if (c[0] == "aggregate") {
      ReportAggregate a;
      a.metric_set = *set;
      a.condition = c[2];
      a.snr_db = snr;
      const auto n = static_cast<std::size_t>(parse_double(c[15], where));
      a.f1_weighted = {n, parse_double(c[6], where), 0.0, 0.0, 0.0};
      a.f1_hold = {n, parse_double(c[7], where), 0.0, 0.0, 0.0};
      a.f1_shift = {n, parse_double(c[8], where), 0.0, 0.0, 0.0};
      a.bal_acc = {n, parse_double(c[9], where), parse_double(c[12], where),
                   parse_double(c[13], where), parse_double(c[14], where)};
      report.aggregates.push_back(a);
    } else {
      throw Error(where + ": unknown row type '" + c[0] + "'");
    }
  }
  return report;
}

EvalReport merge_reports(std::span<const EvalReport> reports) {
  EvalReport out;
  if (reports.empty()) return out;
  out.config_hash = reports.front().config_hash;
  for (const auto& r : reports) {
    if (r.config_hash != out.config_hash) {
      throw Error(fmt::format("merge_reports: config hash {} differs from {}",
                              r.config_hash, out.config_hash));
    }
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.dropped += r.dropped;
  }
  out.aggregates = aggregate(out.rows);
  return out;
}

std::vector<FigurePoint> figure_from_report(const EvalReport& report, MetricSet set) {
  if (report.rows.empty() && report.aggregates.empty()) {
    throw Error("figure data: report is empty");
  }
  std::vector<FigurePoint> out;
  for (const auto& a : report.aggregates) {
    if (a.metric_set != set || !a.snr_db) continue;
    out.push_back({a.condition, *a.snr_db, a.bal_acc.mean, a.bal_acc.ci_low,
                   a.bal_acc.ci_high, a.bal_acc.mean});
  }
  return out;
}

std::vector<FigurePoint> figure_from_wer(std::span<const WerEntry> entries) {
  if (entries.empty()) throw Error("figure data: WER table is empty");
  std::vector<std::pair<std::string, double>> keys;
  std::vector<std::vector<double>> values;
  for (const auto& e : entries) {
    std::size_t k = 0;
    while (k < keys.size() && !(keys[k].first == e.condition && keys[k].second == e.snr_db)) ++k;
    if (k == keys.size()) {
      keys.emplace_back(e.condition, e.snr_db);
      values.emplace_back();
    }
    values[k].push_back(e.wer);
  }
  std::vector<FigurePoint> out;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const auto s = summarize(values[k]);
    out.push_back({keys[k].first, keys[k].second, std::min(s.mean, 1.0),
                   std::min(s.ci_low, 1.0), std::min(s.ci_high, 1.0), s.mean});
  }
  return out;
}

void write_figure_csv(std::ostream& os, std::span<const FigurePoint> points,
                      const std::string& metric, const std::string& config_hash) {
  if (points.empty()) throw Error("figure data: nothing to write");
  os << "series,x,y,ci_low,ci_high,y_raw,metric,config_hash\n";
  for (const auto& p : points) {
    os << fmt::format("{},{:g},{:.6f},{:.6f},{:.6f},{:.6f},{},{}\n", p.series, p.x, p.y,
                      p.ci_low, p.ci_high, p.y_raw, metric, config_hash);
  }
}

ProbabilityStream shift_stream_from_activity(
    std::span<const std::array<std::array<double, FutureActivityLabels::kBins>, 2>> probs,
    std::span<const int> last_speaker, double frame_rate_hz) {
  if (probs.size() != last_speaker.size()) {
    throw Error("shift_stream_from_activity: probabilities and speakers differ in length");
  }
  ProbabilityStream s;
  s.frame_rate_hz = frame_rate_hz;
  s.p_shift.resize(probs.size());
  for (std::size_t f = 0; f < probs.size(); ++f) {
    const int prev = last_speaker[f];
    if (prev != 0 && prev != 1) throw Error("shift_stream_from_activity: speaker must be 0 or 1");
    const auto& mine = probs[f][static_cast<std::size_t>(prev)];
    const auto& other = probs[f][static_cast<std::size_t>(1 - prev)];
    const double mp = std::accumulate(mine.begin(), mine.end(), 0.0) / mine.size();
    const double mo = std::accumulate(other.begin(), other.end(), 0.0) / other.size();
    s.p_shift[f] = mo + mp > 0.0 ? mo / (mo + mp) : 0.5;
  }
  s.validate();
  return s;
}

std::vector<int> last_speaker_track(const VadTrack& vad, std::size_t n_frames,
                                    double frame_rate_hz) {
  std::vector<int> out(n_frames, 0);
  int last = 0;
  std::size_t j = 0;  // next 100 Hz frame to fold in
  for (std::size_t f = 0; f < n_frames; ++f) {
    // 100 Hz frames that end at or before this frame's start time.
    const double t = static_cast<double>(f) / frame_rate_hz;
    const auto upto = static_cast<std::size_t>(
        std::max(0.0, std::floor(t * VadTrack::kFrameRateHz + 1e-9)));
    for (; j < std::min(upto, vad.frames()); ++j) {
      const bool a = vad.active[0][j], b = vad.active[1][j];
      if (a != b) last = a ? 0 : 1;
    }
    out[f] = last;
  }
  return out;
}

ProbabilityStream stub_stream(double duration_s, std::span<const TurnEvent> events,
                              StubKind kind, std::uint64_t seed,
                              const ScoringOptions& options, double frame_rate_hz) {
  ProbabilityStream s;
  s.frame_rate_hz = frame_rate_hz;
  const auto n = static_cast<std::size_t>(std::ceil(duration_s * frame_rate_hz - 1e-9));
  std::vector<bool> in_shift(n, false);
  for (const auto& e : events) {
    if (e.kind != TurnKind::kShift) continue;
    const auto w = score_window(frame_rate_hz, anchor_time(e, options.anchor, options.window_ms),
                                options.window_ms);
    for (auto j = std::max<std::ptrdiff_t>(w.begin, 0);
         j < std::min<std::ptrdiff_t>(w.end, static_cast<std::ptrdiff_t>(n)); ++j) {
      in_shift[static_cast<std::size_t>(j)] = true;
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  s.p_shift.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    switch (kind) {
      case StubKind::kSeparable: s.p_shift[j] = in_shift[j] ? 1.0 : 0.0; break;
      case StubKind::kConstant: s.p_shift[j] = 0.5; break;
      case StubKind::kNoisy:
        s.p_shift[j] = in_shift[j] ? 0.3 + 0.7 * u(rng) : 0.7 * u(rng);
        break;
    }
  }
  return s;
}

ProbabilityStream read_stream_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "t_s,p_shift") {
    throw Error(path.string() + ": expected header 't_s,p_shift'");
  }
  std::vector<double> t, p;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    const std::string where = fmt::format("{}:{}", path.string(), line_no);
    if (c.size() != 2) throw Error(where + ": expected two columns");
    t.push_back(parse_double(c[0], where));
    p.push_back(parse_double(c[1], where));
  }
  if (t.size() < 2) throw Error(path.string() + ": need at least two frames to infer the rate");
  ProbabilityStream s;
  s.frame_rate_hz = std::round(1.0 / (t[1] - t[0]) * 1e6) / 1e6;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (std::abs(t[j] - static_cast<double>(j) / s.frame_rate_hz) > 1e-4) {
      throw Error(fmt::format("{}: frame {} at t={} is off the {} Hz grid", path.string(),
                              j, t[j], s.frame_rate_hz));
    }
  }
  s.p_shift = std::move(p);
  s.validate();
  return s;
}

void write_stream_csv(const std::filesystem::path& path, const ProbabilityStream& s) {
  s.validate();
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "t_s,p_shift\n";
  for (std::size_t j = 0; j < s.frames(); ++j) {
    os << fmt::format("{:.6f},{:.17g}\n", static_cast<double>(j) / s.frame_rate_hz,
                      s.p_shift[j]);
  }
  if (!os) throw Error("failed writing " + path.string());
}

ProbabilityStream read_stream_sidecar(const std::filesystem::path& path) {
  SidecarReader in(path, "CPPS", kStreamVersion);
  ProbabilityStream s;
  s.frame_rate_hz = in.f64();
  const auto n = in.u64();
  s.p_shift = in.f64s(n);
  if (!in.at_end()) throw Error(path.string() + ": trailing bytes");
  s.validate();
  return s;
}

void write_stream_sidecar(const std::filesystem::path& path, const ProbabilityStream& s) {
  s.validate();
  SidecarWriter out(path, "CPPS", kStreamVersion);
  out.f64(s.frame_rate_hz);
  out.u64(s.frames());
  out.f64s(s.p_shift);
  out.close();
}

ProbabilityStream read_stream(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_stream_csv(path) : read_stream_sidecar(path);
}

}  // namespace cueprobe
