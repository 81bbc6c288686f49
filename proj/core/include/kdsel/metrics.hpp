#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "kdsel/detectors.hpp"
#include "kdsel/series.hpp"

namespace kdsel {

// Average precision: sum over descending unique score thresholds of
// (R_k - R_{k-1}) * P_k. Throws UndefinedMetric when no label is positive.
double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Index of the largest entry; the lowest index wins ties.
int argmax_lowest(std::span<const double> values);

// Fills performance and hard_label of every window of `series` whose context
// span (window extended by half a window on both sides) has at least one
// anomalous point. Other windows get supervised = false. Skipped detectors
// score 0, the worst possible value.
void label_windows(std::span<WindowSample> windows, const LabeledSeries& series, const ZooScores& zoo);

// CSV `window_id,hard_label,p_0,...,p_{m-1}` for supervised windows.
void write_label_table(std::span<const WindowSample> windows, std::ostream& out);

struct LabelRow {
  std::string window_id;
  int hard_label = -1;
  std::vector<double> performance;
};
std::vector<LabelRow> read_label_table(std::istream& in);

}  // namespace kdsel
