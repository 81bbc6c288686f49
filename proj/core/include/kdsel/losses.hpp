#pragma once

// Training objectives: hard-label cross-entropy, performance-informed soft
// labels, and the symmetric InfoNCE alignment between series and metadata
// projections.

#include <cstddef>
#include <span>
#include <vector>

namespace kdsel {

// Probabilities are clamped from below at this value before taking logs.
inline constexpr double kProbFloor = 1e-12;

struct NumericCounters {
  std::size_t clamped_probs = 0;
  std::size_t skipped_mki_batches = 0;
};

// Temperature softmax of a performance vector (max-subtracted).
std::vector<double> soft_label(std::span<const double> performance, double t_soft);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> dlogits;
};

// -log p[y]; gradient at the logits is p - onehot(y).
LossGrad ce_loss(std::span<const double> probs, int label, NumericCounters* counters = nullptr);

// Cross-entropy against a soft target: -sum_j soft_j log p_j. Gradient at the
// logits is p - soft.
LossGrad pisl_loss(std::span<const double> probs, std::span<const double> soft, NumericCounters* counters = nullptr);

struct InfoNceResult {
  double loss = 0.0;
  std::vector<double> per_sample;               // (row term + column term) / 2
  std::vector<std::vector<double>> d_series;    // gradient w.r.t. raw series projections
  std::vector<std::vector<double>> d_text;      // gradient w.r.t. raw text projections
};

// Symmetric InfoNCE over cosine similarities divided by `temperature`; pair
// (i, i) is the positive. Optional per-anchor weights multiply each anchor's
// row and column terms (used for pruning rescale). Throws BatchTooSmall for
// fewer than two pairs.
InfoNceResult infonce_loss(const std::vector<std::vector<double>>& series_proj,
                           const std::vector<std::vector<double>>& text_proj, double temperature,
                           std::span<const double> weights = {});

struct LossFlags {
  bool pisl = false;
  bool mki = false;
};

struct LossBreakdown {
  double ce = 0.0;
  double pisl = 0.0;
  double mki = 0.0;
  double total = 0.0;
};

// total = (1 - alpha) * ce + alpha * pisl + lambda * mki; a disabled term has
// weight zero and is reported as 0.
LossBreakdown combine(double ce, double pisl, double mki, double alpha, double lambda, LossFlags flags);

double entropy(std::span<const double> p);

}  // namespace kdsel
