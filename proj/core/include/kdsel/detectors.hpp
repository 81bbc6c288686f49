#pragma once

// The classical detector zoo. Every detector maps a series to one score per
// point; higher always means more anomalous.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdsel/series.hpp"

namespace kdsel {

enum class DetectorKind : int { IForest = 0, LOF = 1, HBOS = 2, MP = 3, PCA = 4, POLY = 5 };

inline constexpr std::size_t kNumDetectors = 6;
inline constexpr std::array<DetectorKind, kNumDetectors> kAllDetectors = {
    DetectorKind::IForest, DetectorKind::LOF, DetectorKind::HBOS,
    DetectorKind::MP,      DetectorKind::PCA, DetectorKind::POLY};

std::string_view detector_name(DetectorKind kind);
DetectorKind detector_from_name(std::string_view name);  // throws LookupError
inline int detector_index(DetectorKind kind) { return static_cast<int>(kind); }
DetectorKind detector_at(int index);

struct DetectorParams {
  std::size_t window = 16;  // sliding window for IForest, LOF and PCA
  std::size_t iforest_trees = 100;
  std::size_t iforest_subsample = 256;
  std::size_t lof_k = 10;
  std::size_t hbos_bins = 10;
  std::size_t hbos_window = 1;
  double pca_variance = 0.9;
  std::size_t poly_degree = 3;
  std::size_t poly_window = 20;
  std::size_t mp_subsequence = 32;
  std::uint64_t seed = 0;
};

struct AnomalyScoreTrace {
  std::string series_id;
  DetectorKind detector = DetectorKind::IForest;
  std::vector<double> scores;
};

AnomalyScoreTrace run_detector(DetectorKind kind, const LabeledSeries& series, const DetectorParams& params);

struct SkipRecord {
  DetectorKind detector;
  std::string reason;
};

struct ZooScores {
  std::vector<AnomalyScoreTrace> traces;
  std::vector<SkipRecord> skipped;

  const AnomalyScoreTrace* find(DetectorKind kind) const;
};

ZooScores score_all(const LabeledSeries& series, const DetectorParams& params);

// CSV `series_id,point_index,detector,score`.
void write_traces_csv(std::span<const AnomalyScoreTrace> traces, std::ostream& out);

// --- building blocks, exposed for direct testing ---------------------------

// Row-major sliding windows of width `width` at stride 1.
std::vector<std::vector<double>> sliding_rows(std::span<const double> values, std::size_t width);

// Places per-window scores at window centers and replicates to the edges.
std::vector<double> spread_to_points(std::span<const double> window_scores, std::size_t width,
                                     std::size_t length);

std::vector<double> hbos_scores(const std::vector<std::vector<double>>& rows, std::size_t bins);
std::vector<double> lof_scores(const std::vector<std::vector<double>>& rows, std::size_t k);

class IsolationForest {
 public:
  IsolationForest(std::size_t trees, std::size_t subsample, std::uint64_t seed);
  void fit(const std::vector<std::vector<double>>& rows);
  double score(std::span<const double> row) const;
  static double average_path_length(std::size_t n);

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::size_t size = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
  };
  double path_length(const Tree& tree, std::span<const double> row) const;

  std::size_t trees_;
  std::size_t subsample_;
  std::uint64_t seed_;
  std::size_t fitted_subsample_ = 0;
  std::vector<Tree> forest_;
};

class PcaModel {
 public:
  // Keeps the fewest leading components whose explained variance reaches
  // `variance_fraction` of the total.
  static PcaModel fit(const std::vector<std::vector<double>>& rows, double variance_fraction);
  double reconstruction_error(std::span<const double> row) const;
  std::size_t components() const noexcept { return basis_.size(); }

 private:
  std::vector<double> mean_;
  std::vector<std::vector<double>> basis_;  // orthonormal rows
};

// Matrix profile with subsequence length m and exclusion zone ceil(m/4):
// z-normalized Euclidean distance from each subsequence to its nearest
// non-trivial neighbor.
std::vector<double> matrix_profile(std::span<const double> values, std::size_t m);
std::size_t mp_exclusion_zone(std::size_t m);

// Linear predictor for t from the `window` preceding points under a
// least-squares polynomial of the given degree.
std::vector<double> poly_predictor(std::size_t window, std::size_t degree);
std::vector<double> poly_scores(std::span<const double> values, std::size_t window, std::size_t degree);

}  // namespace kdsel
