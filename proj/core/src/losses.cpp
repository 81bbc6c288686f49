#include "kdsel/losses.hpp"

#include <algorithm>
#include <cmath>

#include "kdsel/errors.hpp"

namespace kdsel {

namespace {

double safe_log(double p, NumericCounters* counters) {
  if (p < kProbFloor) {
    if (counters) ++counters->clamped_probs;
    p = kProbFloor;
  }
  return std::log(p);
}

}  // namespace

std::vector<double> soft_label(std::span<const double> performance, double t_soft) {
  if (!(t_soft > 0.0)) throw ConfigError("t_soft must be > 0");
  std::vector<double> out(performance.size());
  if (performance.empty()) return out;
  const double mx = *std::max_element(performance.begin(), performance.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < performance.size(); ++j) {
    out[j] = std::exp((performance[j] - mx) / t_soft);
    sum += out[j];
  }
  for (auto& v : out) v /= sum;
  return out;
}

LossGrad ce_loss(std::span<const double> probs, int label, NumericCounters* counters) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) throw DimensionError("ce_loss: label out of range");
  LossGrad out;
  out.loss = -safe_log(probs[static_cast<std::size_t>(label)], counters);
  out.dlogits.assign(probs.begin(), probs.end());
  out.dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

LossGrad pisl_loss(std::span<const double> probs, std::span<const double> soft, NumericCounters* counters) {
  if (probs.size() != soft.size()) throw DimensionError("pisl_loss: distributions differ in length");
  LossGrad out;
  double acc = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (soft[j] == 0.0) continue;
    acc += soft[j] * safe_log(probs[j], counters);
  }
  out.loss = -acc;
  out.dlogits.resize(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) out.dlogits[j] = probs[j] - soft[j];
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

InfoNceResult infonce_loss(const std::vector<std::vector<double>>& series_proj,
                           const std::vector<std::vector<double>>& text_proj, double temperature,
                           std::span<const double> weights) {
  const std::size_t n = series_proj.size();
  if (n != text_proj.size()) throw DimensionError("infonce: series and text batches differ in size");
  if (n < 2) throw BatchTooSmall("infonce needs at least two pairs, got " + std::to_string(n));
  if (!(temperature > 0.0)) throw ConfigError("InfoNCE temperature must be > 0");
  if (!weights.empty() && weights.size() != n) throw DimensionError("infonce: weight count mismatch");
  const std::size_t dim = series_proj.front().size();

  auto normalize = [&](const std::vector<std::vector<double>>& in, std::vector<std::vector<double>>& unit,
                       std::vector<double>& norms) {
    unit.resize(n);
    norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (in[i].size() != dim) throw DimensionError("infonce: projection dimension mismatch");
      double s = 0.0;
      for (double v : in[i]) s += v * v;
      norms[i] = std::max(std::sqrt(s), 1e-12);
      unit[i].resize(dim);
      for (std::size_t d = 0; d < dim; ++d) unit[i][d] = in[i][d] / norms[i];
    }
  };
  std::vector<std::vector<double>> u, v;
  std::vector<double> nu, nv;
  normalize(series_proj, u, nu);
  normalize(text_proj, v, nv);

  // logits[i][j] = cos(u_i, v_j) / temperature
  std::vector<double> logits(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += u[i][d] * v[j][d];
      logits[i * n + j] = dot / temperature;
    }

  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  const double inv_n = 1.0 / static_cast<double>(n);
  InfoNceResult out;
  out.per_sample.assign(n, 0.0);
  std::vector<double> dlogits(n * n, 0.0);

  // Series -> text: softmax along each row.
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits[i * n + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(logits[i * n + j] - mx);
    const double lse = mx + std::log(sum);
    const double term = lse - logits[i * n + i];
    out.per_sample[i] += 0.5 * term;
    const double g = 0.5 * weight(i) * inv_n;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = std::exp(logits[i * n + j] - lse);
      dlogits[i * n + j] += g * (p - (i == j ? 1.0 : 0.0));
    }
  }
  // Text -> series: softmax along each column.
  for (std::size_t j = 0; j < n; ++j) {
    double mx = logits[j];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i * n + j]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(logits[i * n + j] - mx);
    const double lse = mx + std::log(sum);
    const double term = lse - logits[j * n + j];
    out.per_sample[j] += 0.5 * term;
    const double g = 0.5 * weight(j) * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::exp(logits[i * n + j] - lse);
      dlogits[i * n + j] += g * (p - (i == j ? 1.0 : 0.0));
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.loss += weight(i) * out.per_sample[i];
  out.loss *= inv_n;

  // Back through the cosine similarities and the L2 normalization.
  std::vector<std::vector<double>> du(n, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> dv(n, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double g = dlogits[i * n + j] / temperature;
      if (g == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        du[i][d] += g * v[j][d];
        dv[j][d] += g * u[i][d];
      }
    }
  auto unnormalize = [&](const std::vector<std::vector<double>>& unit, const std::vector<double>& norms,
                         std::vector<std::vector<double>>& grad) {
    for (std::size_t i = 0; i < n; ++i) {
      double proj = 0.0;
      for (std::size_t d = 0; d < dim; ++d) proj += unit[i][d] * grad[i][d];
      for (std::size_t d = 0; d < dim; ++d) grad[i][d] = (grad[i][d] - unit[i][d] * proj) / norms[i];
    }
  };
  unnormalize(u, nu, du);
  unnormalize(v, nv, dv);
  out.d_series = std::move(du);
  out.d_text = std::move(dv);
  return out;
}

LossBreakdown combine(double ce, double pisl, double mki, double alpha, double lambda, LossFlags flags) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0,1]");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  LossBreakdown b;
  b.ce = ce;
  b.pisl = flags.pisl ? pisl : 0.0;
  b.mki = flags.mki ? mki : 0.0;
  const double a = flags.pisl ? alpha : 0.0;
  const double l = flags.mki ? lambda : 0.0;
  b.total = (1.0 - a) * b.ce + a * b.pisl + l * b.mki;
  return b;
}

}  // namespace kdsel
