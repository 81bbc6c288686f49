#include "kdsel/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace kdsel {

std::string_view family_name(SyntheticFamily family) {
  switch (family) {
    case SyntheticFamily::Spike:
      return "spike";
    case SyntheticFamily::MotifBreak:
      return "motif-break";
    case SyntheticFamily::Drift:
      return "drift";
  }
  return "spike";
}

namespace {

// Picks `count` segment starts in [margin, length - margin - seg) that are at
// least `gap` apart.
std::vector<std::size_t> place_segments(std::mt19937_64& rng, std::size_t length, std::size_t seg, std::size_t count,
                                        std::size_t margin, std::size_t gap) {
  std::vector<std::size_t> starts;
  if (length < 2 * margin + seg) return starts;
  std::uniform_int_distribution<std::size_t> pick(margin, length - margin - seg);
  for (int attempt = 0; attempt < 1000 && starts.size() < count; ++attempt) {
    const std::size_t s = pick(rng);
    bool ok = true;
    for (auto o : starts)
      if ((s > o ? s - o : o - s) < gap + seg) ok = false;
    if (ok) starts.push_back(s);
  }
  std::sort(starts.begin(), starts.end());
  return starts;
}

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

LabeledSeries make_synthetic_series(SyntheticFamily family, std::size_t index, const SyntheticOptions& options) {
  const std::size_t n = options.length;
  const double strength = options.anomaly_strength;
  std::mt19937_64 rng(options.seed * 1000003ULL + static_cast<std::uint64_t>(family) * 7919ULL + index);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  LabeledSeries s;
  s.values.assign(n, 0.0);
  s.point_labels.assign(n, 0);
  const std::string fam(family_name(family));
  s.id = fam + "-" + std::to_string(index);

  switch (family) {
    case SyntheticFamily::Spike: {
      s.dataset_name = "SynthSpike";
      s.domain_text = "sensor readings with short electrical interference spikes";
      // Bounded white noise: no sparse tail bins for the spikes to hide in.
      for (std::size_t t = 0; t < n; ++t) s.values[t] = 0.6 * (2.0 * unif(rng) - 1.0);
      const std::size_t count = 3 + index % 3;
      for (auto p : place_segments(rng, n, 1, count, 24, 40)) {
        const double amp = strength * (2.5 + 1.5 * unif(rng));
        s.values[p] += unif(rng) < 0.5 ? -amp : amp;
        s.point_labels[p] = 1;
      }
      break;
    }
    case SyntheticFamily::MotifBreak: {
      s.dataset_name = "SynthMotif";
      s.domain_text = "periodic machine cycles where one cycle changes its shape";
      const std::size_t period = 20 + 4 * (index % 3);
      const double phase = unif(rng) * kTwoPi;
      const double mod_phase = unif(rng) * kTwoPi;
      // Slow amplitude and level modulation: raw-value detectors see it as
      // variability, z-normalized subsequence distances do not.
      auto amplitude = [&](std::size_t t) { return 1.0 + 0.4 * std::sin(kTwoPi * static_cast<double>(t) / 230.0 + mod_phase); };
      auto level = [&](std::size_t t) { return 1.2 * std::sin(kTwoPi * static_cast<double>(t) / 170.0 + 2.0 * mod_phase); };
      auto wave = [&](std::size_t t, double harmonic) {
        const double x = kTwoPi * static_cast<double>(t) / static_cast<double>(period) + phase;
        return std::sin(x) + harmonic * std::sin(2.0 * x);
      };
      std::vector<double> harmonic(n, 0.5);
      const std::size_t count = 1 + index % 2;
      for (auto p : place_segments(rng, n, period, count, 2 * period, 3 * period)) {
        for (std::size_t t = p; t < p + period; ++t) {
          // Same range, different waveform: the second harmonic flips sign.
          harmonic[t] = 0.5 - std::min(1.0, strength);
          s.point_labels[t] = 1;
        }
      }
      for (std::size_t t = 0; t < n; ++t)
        s.values[t] = level(t) + amplitude(t) * wave(t, harmonic[t]) + 0.05 * gauss(rng);
      break;
    }
    case SyntheticFamily::Drift: {
      s.dataset_name = "SynthDrift";
      s.domain_text = "slowly varying process temperature with episodes of unstable drift";
      // Sum of slow components with random periods: smooth but never
      // repeating, so window-shape detectors find no stable neighborhood.
      double base_period[3], base_amp[3], base_phase[3];
      for (int k = 0; k < 3; ++k) {
        base_period[k] = 90.0 + 220.0 * unif(rng);
        base_amp[k] = 0.6 + 1.2 * unif(rng);
        base_phase[k] = unif(rng) * kTwoPi;
      }
      for (std::size_t t = 0; t < n; ++t) {
        double v = 0.01 * gauss(rng);
        for (int k = 0; k < 3; ++k)
          v += base_amp[k] * std::sin(kTwoPi * static_cast<double>(t) / base_period[k] + base_phase[k]);
        s.values[t] = v;
      }
      const std::size_t seg = 20 + 5 * (index % 3);
      const std::size_t count = 1 + index % 2;
      for (auto p : place_segments(rng, n, seg, count, 40, 80)) {
        double walk = 0.0;
        for (std::size_t t = p; t < p + seg; ++t) {
          walk += strength * 0.15 * gauss(rng);
          s.values[t] += walk;
          s.point_labels[t] = 1;
        }
        // Relax back to the background instead of jumping.
        for (std::size_t t = p + seg; t < std::min(n, p + seg + 20); ++t) {
          walk *= 0.8;
          s.values[t] += walk;
        }
      }
      break;
    }
  }
  return s;
}

Corpus make_synthetic_corpus(const SyntheticOptions& options) {
  Corpus corpus;
  corpus.reserve(3 * options.series_per_family);
  for (std::size_t i = 0; i < options.series_per_family; ++i)
    for (auto family : {SyntheticFamily::Spike, SyntheticFamily::MotifBreak, SyntheticFamily::Drift})
      corpus.push_back(make_synthetic_series(family, i, options));
  return corpus;
}

}  // namespace kdsel
