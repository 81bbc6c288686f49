#include "kdsel/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "kdsel/errors.hpp"

namespace kdsel {

double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc_pr: scores and labels differ in length");
  const auto total_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (total_pos == 0) throw UndefinedMetric("auc_pr: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // Consume the whole tie group at this threshold.
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      tp += labels[order[i]] == 1 ? 1 : 0;
      ++seen;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return std::clamp(ap, 0.0, 1.0);
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) return -1;
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

void label_windows(std::span<WindowSample> windows, const LabeledSeries& series, const ZooScores& zoo) {
  const std::size_t n = series.size();
  for (auto& w : windows) {
    if (w.series_id != series.id) throw InternalError("label_windows: window from another series");
    const std::size_t len = w.values.size();
    const std::size_t margin = len / 2;
    const std::size_t begin = w.offset > margin ? w.offset - margin : 0;
    const std::size_t end = std::min(n, w.offset + len + margin);
    const std::span<const std::uint8_t> span_labels(series.point_labels.data() + begin, end - begin);
    w.performance.clear();
    w.hard_label = -1;
    w.supervised = std::find(span_labels.begin(), span_labels.end(), 1) != span_labels.end();
    if (!w.supervised) continue;
    w.performance.assign(kNumDetectors, 0.0);
    for (auto kind : kAllDetectors) {
      const auto* trace = zoo.find(kind);
      if (trace == nullptr) continue;
      const std::span<const double> span_scores(trace->scores.data() + begin, end - begin);
      w.performance[static_cast<std::size_t>(detector_index(kind))] = auc_pr(span_scores, span_labels);
    }
    w.hard_label = argmax_lowest(w.performance);
  }
}

void write_label_table(std::span<const WindowSample> windows, std::ostream& out) {
  out << "window_id,hard_label";
  for (std::size_t j = 0; j < kNumDetectors; ++j) out << ",p_" << j;
  out << '\n';
  const auto old = out.precision(17);
  for (const auto& w : windows) {
    if (!w.supervised) continue;
    out << w.window_id() << ',' << w.hard_label;
    for (double p : w.performance) out << ',' << p;
    out << '\n';
  }
  out.precision(old);
}

std::vector<LabelRow> read_label_table(std::istream& in) {
  std::vector<LabelRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line.rfind("window_id,hard_label", 0) != 0) throw ParseError("expected label table header", lineno);
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    LabelRow row;
    std::getline(ss, row.window_id, ',');
    if (!std::getline(ss, field, ',')) throw ParseError("missing hard_label", lineno);
    try {
      row.hard_label = std::stoi(field);
      while (std::getline(ss, field, ',')) row.performance.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ParseError("malformed number in label table", lineno);
    }
    if (row.performance.size() != kNumDetectors) throw ParseError("wrong number of performance columns", lineno);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace kdsel
