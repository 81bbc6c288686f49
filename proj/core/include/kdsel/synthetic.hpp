#pragma once

// Synthetic mixed-anomaly corpora. Each family pairs a background signal with
// one anomaly type that a particular detector handles best:
//   spike       - isolated point spikes on bounded white noise (HBOS)
//   motif-break - a period of a repeating pattern replaced by another shape (MP)
//   drift       - slow non-repeating signal with random-walk episodes (POLY)

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "kdsel/series.hpp"

namespace kdsel {

enum class SyntheticFamily { Spike = 0, MotifBreak = 1, Drift = 2 };

std::string_view family_name(SyntheticFamily family);

struct SyntheticOptions {
  std::size_t series_per_family = 10;
  std::size_t length = 768;
  std::uint64_t seed = 1;
  // Scales every family's anomaly strength; lower values make the detectors
  // disagree more often.
  double anomaly_strength = 1.0;
};

LabeledSeries make_synthetic_series(SyntheticFamily family, std::size_t index, const SyntheticOptions& options);

// Families interleaved: spike-0, motif-0, drift-0, spike-1, ...
Corpus make_synthetic_corpus(const SyntheticOptions& options);

}  // namespace kdsel
