#pragma once

// Independent reference implementations used as test oracles. They favor
// the most literal formulation over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace kdsel::testing {

// Average precision by enumerating every distinct score as a threshold:
// predicted positive iff score >= threshold.
inline double brute_force_auc_pr(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  std::size_t positives = 0;
  for (auto l : labels) positives += l;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++predicted;
        tp += labels[i];
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// O(n^2 m) matrix profile: z-normalized Euclidean distance to the nearest
// subsequence outside the exclusion zone.
inline std::vector<double> naive_matrix_profile(const std::vector<double>& x, std::size_t m, std::size_t zone) {
  const std::size_t count = x.size() - m + 1;
  std::vector<std::vector<double>> z(count, std::vector<double>(m));
  std::vector<bool> constant(count, false);
  for (std::size_t i = 0; i < count; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < m; ++k) mean += x[i + k];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t k = 0; k < m; ++k) var += (x[i + k] - mean) * (x[i + k] - mean);
    const double sd = std::sqrt(var / static_cast<double>(m));
    constant[i] = sd <= 1e-12 * std::max(1.0, std::abs(mean));
    for (std::size_t k = 0; k < m; ++k) z[i][k] = constant[i] ? 0.0 : (x[i + k] - mean) / sd;
  }
  std::vector<double> out(count, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      if ((i > j ? i - j : j - i) <= zone) continue;
      double d;
      if (constant[i] && constant[j]) {
        d = 0.0;
      } else if (constant[i] || constant[j]) {
        d = std::sqrt(static_cast<double>(m));  // correlation 0.5
      } else {
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) s += (z[i][k] - z[j][k]) * (z[i][k] - z[j][k]);
        d = std::sqrt(s);
      }
      out[i] = std::min(out[i], d);
    }
  }
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("kdsel-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace kdsel::testing
