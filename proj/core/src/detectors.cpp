#include "kdsel/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <Eigen/Dense>

#include "kdsel/errors.hpp"

namespace kdsel {

namespace {

constexpr std::array<std::string_view, kNumDetectors> kNames = {"IForest", "LOF", "HBOS",
                                                                 "MP",      "PCA", "POLY"};

}  // namespace

std::string_view detector_name(DetectorKind kind) { return kNames.at(static_cast<std::size_t>(kind)); }

DetectorKind detector_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<DetectorKind>(i);
  }
  throw LookupError("unknown detector '" + std::string(name) + "'");
}

DetectorKind detector_at(int index) {
  if (index < 0 || index >= static_cast<int>(kNumDetectors))
    throw LookupError("detector index " + std::to_string(index) + " out of range");
  return static_cast<DetectorKind>(index);
}

const AnomalyScoreTrace* ZooScores::find(DetectorKind kind) const {
  for (const auto& t : traces) {
    if (t.detector == kind) return &t;
  }
  return nullptr;
}

std::vector<std::vector<double>> sliding_rows(std::span<const double> values, std::size_t width) {
  std::vector<std::vector<double>> rows;
  if (width == 0 || values.size() < width) return rows;
  rows.reserve(values.size() - width + 1);
  for (std::size_t i = 0; i + width <= values.size(); ++i)
    rows.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(i),
                      values.begin() + static_cast<std::ptrdiff_t>(i + width));
  return rows;
}

std::vector<double> spread_to_points(std::span<const double> window_scores, std::size_t width,
                                     std::size_t length) {
  std::vector<double> out(length, 0.0);
  if (window_scores.empty()) return out;
  const std::size_t half = width / 2;
  for (std::size_t t = 0; t < length; ++t) {
    std::size_t w = t < half ? 0 : t - half;
    w = std::min(w, window_scores.size() - 1);
    out[t] = window_scores[w];
  }
  return out;
}

// --- HBOS -------------------------------------------------------------------

std::vector<double> hbos_scores(const std::vector<std::vector<double>>& rows, std::size_t bins) {
  std::vector<double> scores(rows.size(), 0.0);
  if (rows.empty()) return scores;
  if (bins == 0) throw ConfigError("HBOS needs at least one bin");
  const std::size_t dims = rows.front().size();
  const double n = static_cast<double>(rows.size());
  std::vector<std::size_t> counts(bins);
  std::vector<std::size_t> bin_of(rows.size());
  for (std::size_t d = 0; d < dims; ++d) {
    double lo = rows[0][d];
    double hi = rows[0][d];
    for (const auto& r : rows) {
      lo = std::min(lo, r[d]);
      hi = std::max(hi, r[d]);
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::size_t b = 0;
      if (width > 0.0) {
        b = static_cast<std::size_t>((rows[i][d] - lo) / width);
        b = std::min(b, bins - 1);
      }
      bin_of[i] = b;
      ++counts[b];
    }
    const double bin_width = width > 0.0 ? width : 1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double height = static_cast<double>(counts[bin_of[i]]) / (n * bin_width);
      scores[i] += std::log(1.0 / height);
    }
  }
  return scores;
}

// --- LOF --------------------------------------------------------------------

std::vector<double> lof_scores(const std::vector<std::vector<double>>& rows, std::size_t k) {
  const std::size_t n = rows.size();
  std::vector<double> out(n, 1.0);
  if (n < 2) return out;
  k = std::min(k, n - 1);
  if (k == 0) return out;

  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t d = 0; d < rows[a].size(); ++d) {
      const double diff = rows[a][d] - rows[b][d];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  std::vector<std::vector<std::pair<double, std::size_t>>> neighbors(n);
  std::vector<double> kdist(n);
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.emplace_back(dist(i, j), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    neighbors[i].assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k));
    kdist[i] = neighbors[i].back().first;
  }

  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (auto [d, j] : neighbors[i]) sum += std::max(kdist[j], d);
    // Duplicate-heavy neighborhoods have zero reachability; the floor keeps
    // densities finite so such points score 1 instead of NaN.
    lrd[i] = 1.0 / (sum / static_cast<double>(k) + 1e-10);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (auto [d, j] : neighbors[i]) sum += lrd[j];
    out[i] = sum / static_cast<double>(k) / lrd[i];
  }
  return out;
}

// --- Isolation forest -------------------------------------------------------

IsolationForest::IsolationForest(std::size_t trees, std::size_t subsample, std::uint64_t seed)
    : trees_(trees), subsample_(subsample), seed_(seed) {
  if (trees == 0 || subsample < 2) throw ConfigError("isolation forest needs trees >= 1 and subsample >= 2");
}

double IsolationForest::average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double m = static_cast<double>(n - 1);
  constexpr double kEuler = 0.5772156649015329;
  return 2.0 * (std::log(m) + kEuler) - 2.0 * m / static_cast<double>(n);
}

void IsolationForest::fit(const std::vector<std::vector<double>>& rows) {
  forest_.clear();
  if (rows.empty()) throw ValidationError("isolation forest: no rows");
  const std::size_t dims = rows.front().size();
  const std::size_t psi = std::min(subsample_, rows.size());
  fitted_subsample_ = psi;
  const auto height_limit = static_cast<std::size_t>(std::ceil(std::log2(std::max<std::size_t>(psi, 2))));

  std::vector<std::size_t> all(rows.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> usable;
  for (std::size_t t = 0; t < trees_; ++t) {
    std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ULL + t + 1);
    // Partial Fisher-Yates for a sample without replacement.
    for (std::size_t i = 0; i < psi; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    std::vector<std::size_t> sample(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi));
    std::sort(sample.begin(), sample.end());

    Tree tree;
    struct Pending {
      int node;
      std::size_t begin, end, depth;
    };
    tree.nodes.push_back(Node{});
    std::vector<Pending> stack{{0, 0, sample.size(), 0}};
    while (!stack.empty()) {
      auto [node_idx, begin, end, depth] = stack.back();
      stack.pop_back();
      const std::size_t size = end - begin;
      tree.nodes[static_cast<std::size_t>(node_idx)].size = size;
      if (size <= 1 || depth >= height_limit) continue;
      usable.clear();
      for (std::size_t d = 0; d < dims; ++d) {
        double lo = rows[sample[begin]][d];
        double hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
          lo = std::min(lo, rows[sample[i]][d]);
          hi = std::max(hi, rows[sample[i]][d]);
        }
        if (hi > lo) usable.push_back(static_cast<int>(d));
      }
      if (usable.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick_feature(0, usable.size() - 1);
      const int feature = usable[pick_feature(rng)];
      const auto f = static_cast<std::size_t>(feature);
      double lo = rows[sample[begin]][f];
      double hi = lo;
      for (std::size_t i = begin; i < end; ++i) {
        lo = std::min(lo, rows[sample[i]][f]);
        hi = std::max(hi, rows[sample[i]][f]);
      }
      std::uniform_real_distribution<double> pick_split(lo, hi);
      double threshold = pick_split(rng);
      if (threshold <= lo) threshold = std::nextafter(lo, hi);
      auto mid = std::partition(sample.begin() + static_cast<std::ptrdiff_t>(begin),
                                sample.begin() + static_cast<std::ptrdiff_t>(end),
                                [&](std::size_t r) { return rows[r][f] < threshold; });
      const auto split = static_cast<std::size_t>(mid - sample.begin());
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(Node{});
      const int right = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(Node{});
      Node& parent = tree.nodes[static_cast<std::size_t>(node_idx)];
      parent.feature = feature;
      parent.threshold = threshold;
      parent.left = left;
      parent.right = right;
      stack.push_back({right, split, end, depth + 1});
      stack.push_back({left, begin, split, depth + 1});
    }
    forest_.push_back(std::move(tree));
  }
}

double IsolationForest::path_length(const Tree& tree, std::span<const double> row) const {
  std::size_t idx = 0;
  double depth = 0.0;
  while (tree.nodes[idx].feature >= 0) {
    const Node& node = tree.nodes[idx];
    idx = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left
                                                                                               : node.right);
    depth += 1.0;
  }
  return depth + average_path_length(tree.nodes[idx].size);
}

double IsolationForest::score(std::span<const double> row) const {
  if (forest_.empty()) throw InternalError("isolation forest used before fit");
  double total = 0.0;
  for (const auto& tree : forest_) total += path_length(tree, row);
  const double mean = total / static_cast<double>(forest_.size());
  const double c = average_path_length(fitted_subsample_);
  if (c <= 0.0) return 0.5;
  return std::pow(2.0, -mean / c);
}

// --- PCA --------------------------------------------------------------------

PcaModel PcaModel::fit(const std::vector<std::vector<double>>& rows, double variance_fraction) {
  if (rows.empty()) throw ValidationError("PCA: no rows");
  const std::size_t n = rows.size();
  const std::size_t dims = rows.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dims; ++d) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rows[i][d];
  Eigen::VectorXd mean = x.colwise().mean();
  x.rowwise() -= mean.transpose();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);

  PcaModel model;
  model.mean_.assign(mean.data(), mean.data() + mean.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
  double total = 0.0;
  for (Eigen::Index i = 0; i < evals.size(); ++i) total += std::max(0.0, evals(i));
  if (total <= std::numeric_limits<double>::min()) return model;
  double acc = 0.0;
  for (Eigen::Index i = evals.size() - 1; i >= 0; --i) {
    const Eigen::VectorXd v = solver.eigenvectors().col(i);
    model.basis_.emplace_back(v.data(), v.data() + v.size());
    acc += std::max(0.0, evals(i));
    if (acc >= variance_fraction * total * (1.0 - 1e-12)) break;
  }
  return model;
}

double PcaModel::reconstruction_error(std::span<const double> row) const {
  std::vector<double> residual(row.size());
  for (std::size_t d = 0; d < row.size(); ++d) residual[d] = row[d] - mean_[d];
  std::vector<double> centered = residual;
  for (const auto& b : basis_) {
    double coef = 0.0;
    for (std::size_t d = 0; d < b.size(); ++d) coef += b[d] * centered[d];
    for (std::size_t d = 0; d < b.size(); ++d) residual[d] -= coef * b[d];
  }
  double s = 0.0;
  for (double r : residual) s += r * r;
  return std::sqrt(s);
}

// --- Matrix profile ---------------------------------------------------------

std::size_t mp_exclusion_zone(std::size_t m) { return (m + 3) / 4; }

namespace {

struct SubsequenceStats {
  std::vector<double> mean;
  std::vector<double> sd;  // 0 marks a constant subsequence
};

SubsequenceStats subsequence_stats(std::span<const double> values, std::size_t m) {
  const std::size_t count = values.size() - m + 1;
  SubsequenceStats st;
  st.mean.resize(count);
  st.sd.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    double mu = 0.0;
    for (std::size_t k = 0; k < m; ++k) mu += values[i + k];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t k = 0; k < m; ++k) var += (values[i + k] - mu) * (values[i + k] - mu);
    double sd = std::sqrt(var / static_cast<double>(m));
    if (sd <= 1e-12 * std::max(1.0, std::abs(mu))) sd = 0.0;
    st.mean[i] = mu;
    st.sd[i] = sd;
  }
  return st;
}

// Direct z-normalized distance, used to refine the nearest-neighbor values
// found through the incremental correlation sweep.
double znorm_distance(std::span<const double> values, const SubsequenceStats& st, std::size_t m,
                      std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double a = st.sd[i] > 0.0 ? (values[i + k] - st.mean[i]) / st.sd[i] : 0.0;
    const double b = st.sd[j] > 0.0 ? (values[j + k] - st.mean[j]) / st.sd[j] : 0.0;
    s += (a - b) * (a - b);
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<double> matrix_profile(std::span<const double> values, std::size_t m) {
  if (m < 2) throw ConfigError("matrix profile subsequence length must be >= 2");
  if (values.size() < 2 * m) throw DetectorSkip("MP", "series shorter than twice the subsequence length");
  const std::size_t count = values.size() - m + 1;
  const std::size_t ez = mp_exclusion_zone(m);
  const auto st = subsequence_stats(values, m);
  const double md = static_cast<double>(m);

  std::vector<double> best_corr(count, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> best_idx(count, count);

  auto consider = [&](std::size_t i, std::size_t j, double corr) {
    if (corr > best_corr[i]) {
      best_corr[i] = corr;
      best_idx[i] = j;
    }
    if (corr > best_corr[j]) {
      best_corr[j] = corr;
      best_idx[j] = i;
    }
  };

  for (std::size_t diag = ez + 1; diag < count; ++diag) {
    double qt = 0.0;
    for (std::size_t k = 0; k < m; ++k) qt += values[k] * values[diag + k];
    for (std::size_t i = 0; i + diag < count; ++i) {
      const std::size_t j = i + diag;
      if (i > 0) qt += values[i + m - 1] * values[j + m - 1] - values[i - 1] * values[j - 1];
      double corr;
      if (st.sd[i] == 0.0 || st.sd[j] == 0.0) {
        corr = (st.sd[i] == 0.0 && st.sd[j] == 0.0) ? 1.0 : 0.5;
      } else {
        corr = (qt - md * st.mean[i] * st.mean[j]) / (md * st.sd[i] * st.sd[j]);
        corr = std::clamp(corr, -1.0, 1.0);
      }
      consider(i, j, corr);
    }
  }

  std::vector<double> profile(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (best_idx[i] == count) throw DetectorSkip("MP", "subsequence without a non-trivial neighbor");
    profile[i] = znorm_distance(values, st, m, i, best_idx[i]);
  }
  return profile;
}

// --- POLY -------------------------------------------------------------------

std::vector<double> poly_predictor(std::size_t window, std::size_t degree) {
  if (degree + 1 > window) throw ConfigError("POLY window must exceed the polynomial degree");
  const auto rows = static_cast<Eigen::Index>(window);
  const auto cols = static_cast<Eigen::Index>(degree + 1);
  Eigen::MatrixXd v(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    // Positions -window..-1 scaled into [-1, 0); the target sits at 0.
    const double x = static_cast<double>(r - rows) / static_cast<double>(rows);
    double p = 1.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      v(r, c) = p;
      p *= x;
    }
  }
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(cols);
  e0(0) = 1.0;
  const Eigen::VectorXd a = (v.transpose() * v).ldlt().solve(e0);
  const Eigen::VectorXd c = v * a;
  return {c.data(), c.data() + c.size()};
}

std::vector<double> poly_scores(std::span<const double> values, std::size_t window, std::size_t degree) {
  if (values.size() <= window) throw DetectorSkip("POLY", "series not longer than the fit window");
  const auto coef = poly_predictor(window, degree);
  std::vector<double> scores(values.size(), 0.0);
  for (std::size_t t = window; t < values.size(); ++t) {
    const double anchor = values[t - 1];
    double pred = 0.0;
    for (std::size_t k = 0; k < window; ++k) pred += coef[k] * (values[t - window + k] - anchor);
    scores[t] = std::abs(pred - (values[t] - anchor));
  }
  for (std::size_t t = 0; t < window; ++t) scores[t] = scores[window];
  return scores;
}

// --- dispatch ---------------------------------------------------------------

AnomalyScoreTrace run_detector(DetectorKind kind, const LabeledSeries& series, const DetectorParams& params) {
  AnomalyScoreTrace trace;
  trace.series_id = series.id;
  trace.detector = kind;
  const std::span<const double> values(series.values);
  const std::size_t n = values.size();
  const std::string name(detector_name(kind));

  auto need_windows = [&](std::size_t width, std::size_t min_rows) {
    if (width == 0) throw ConfigError(name + ": window must be >= 1");
    if (n < width || n - width + 1 < min_rows)
      throw DetectorSkip(name, "series of length " + std::to_string(n) + " too short");
  };

  switch (kind) {
    case DetectorKind::IForest: {
      need_windows(params.window, 2);
      const auto rows = sliding_rows(values, params.window);
      IsolationForest forest(params.iforest_trees, params.iforest_subsample, params.seed);
      forest.fit(rows);
      std::vector<double> s(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) s[i] = forest.score(rows[i]);
      trace.scores = spread_to_points(s, params.window, n);
      break;
    }
    case DetectorKind::LOF: {
      need_windows(params.window, params.lof_k + 1);
      const auto rows = sliding_rows(values, params.window);
      trace.scores = spread_to_points(lof_scores(rows, params.lof_k), params.window, n);
      break;
    }
    case DetectorKind::HBOS: {
      need_windows(params.hbos_window, 1);
      const auto rows = sliding_rows(values, params.hbos_window);
      trace.scores = spread_to_points(hbos_scores(rows, params.hbos_bins), params.hbos_window, n);
      break;
    }
    case DetectorKind::MP: {
      const std::size_t m = params.mp_subsequence;
      if (n < 2 * m) throw DetectorSkip(name, "series of length " + std::to_string(n) + " too short");
      trace.scores = spread_to_points(matrix_profile(values, m), m, n);
      break;
    }
    case DetectorKind::PCA: {
      need_windows(params.window, 2);
      const auto rows = sliding_rows(values, params.window);
      const auto model = PcaModel::fit(rows, params.pca_variance);
      std::vector<double> s(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) s[i] = model.reconstruction_error(rows[i]);
      trace.scores = spread_to_points(s, params.window, n);
      break;
    }
    case DetectorKind::POLY:
      trace.scores = poly_scores(values, params.poly_window, params.poly_degree);
      break;
  }
  for (double s : trace.scores) {
    if (!std::isfinite(s)) throw NumericFault(name + " produced a non-finite score");
  }
  return trace;
}

ZooScores score_all(const LabeledSeries& series, const DetectorParams& params) {
  ZooScores out;
  for (auto kind : kAllDetectors) {
    try {
      out.traces.push_back(run_detector(kind, series, params));
    } catch (const DetectorSkip& e) {
      out.skipped.push_back(SkipRecord{kind, e.what()});
    }
  }
  return out;
}

void write_traces_csv(std::span<const AnomalyScoreTrace> traces, std::ostream& out) {
  out << "series_id,point_index,detector,score\n";
  const auto old = out.precision(17);
  for (const auto& t : traces) {
    for (std::size_t i = 0; i < t.scores.size(); ++i)
      out << t.series_id << ',' << i << ',' << detector_name(t.detector) << ',' << t.scores[i] << '\n';
  }
  out.precision(old);
}

}  // namespace kdsel
