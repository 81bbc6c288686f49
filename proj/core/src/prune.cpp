#include "kdsel/prune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "kdsel/errors.hpp"

namespace kdsel {

LossLedger::LossLedger(std::size_t samples) : sums_(samples, 0.0), counts_(samples, 0) {}

void LossLedger::record(std::size_t id, double loss) {
  sums_.at(id) += loss;
  ++counts_.at(id);
}

double LossLedger::mean_loss(std::size_t id) const {
  const auto c = counts_.at(id);
  return c == 0 ? std::numeric_limits<double>::infinity() : sums_[id] / static_cast<double>(c);
}

double LossLedger::global_mean() const {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sums_.size(); ++i) {
    if (counts_[i] == 0) continue;
    s += sums_[i] / static_cast<double>(counts_[i]);
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::infinity() : s / static_cast<double>(n);
}

LshIndex LshIndex::build(const std::vector<std::vector<double>>& samples, std::size_t bits, std::uint64_t seed) {
  if (bits < 1 || bits > 64) throw ConfigError("LSH bits must lie in [1,64]");
  LshIndex idx;
  idx.dim_ = samples.empty() ? 0 : samples.front().size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  idx.hyperplanes_.resize(bits);
  for (auto& h : idx.hyperplanes_) {
    h.resize(idx.dim_);
    double s = 0.0;
    for (auto& v : h) {
      v = gauss(rng);
      s += v * v;
    }
    const double inv = s > 0.0 ? 1.0 / std::sqrt(s) : 0.0;
    for (auto& v : h) v *= inv;
  }
  idx.codes_.reserve(samples.size());
  for (const auto& x : samples) {
    if (x.size() != idx.dim_) throw DimensionError("LSH sample dimension mismatch");
    idx.codes_.push_back(idx.hash(x));
  }
  return idx;
}

std::uint64_t LshIndex::hash(std::span<const double> x) const {
  if (x.size() != dim_) throw DimensionError("LSH input dimension mismatch");
  std::uint64_t code = 0;
  for (std::size_t k = 0; k < hyperplanes_.size(); ++k) {
    double dot = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) dot += hyperplanes_[k][d] * x[d];
    if (dot >= 0.0) code |= std::uint64_t{1} << k;
  }
  return code;
}

namespace {

EpochPlan empty_plan(std::size_t n) {
  EpochPlan plan;
  plan.rescale.assign(n, 1.0);
  plan.bucket.assign(n, -1);
  plan.stats.n_total = n;
  return plan;
}

void finalize(EpochPlan& plan) {
  plan.kept.clear();
  for (std::size_t i = 0; i < plan.rescale.size(); ++i)
    if (plan.rescale[i] > 0.0) plan.kept.push_back(i);
  plan.stats.n_kept = plan.kept.size();
}

void check_ratio(double r) {
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError("pruning ratio r must lie in [0,1)");
}

// Low-loss side shared by both planners: each seen sample below the global
// mean is dropped with probability r, survivors carry 1/(1-r).
void prune_low_side(const LossLedger& ledger, double r, std::mt19937_64& rng, EpochPlan& plan) {
  const double global = ledger.global_mean();
  const double factor = 1.0 / (1.0 - r);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    if (!ledger.seen(i) || !(ledger.mean_loss(i) < global)) continue;
    if (coin(rng) < r) {
      plan.rescale[i] = 0.0;
      ++plan.stats.n_pruned_low;
    } else {
      plan.rescale[i] = factor;
    }
  }
}

}  // namespace

EpochPlan plan_full(std::size_t samples) {
  auto plan = empty_plan(samples);
  finalize(plan);
  return plan;
}

EpochPlan plan_infobatch(const LossLedger& ledger, double r, std::uint64_t seed) {
  check_ratio(r);
  auto plan = empty_plan(ledger.size());
  std::mt19937_64 rng(seed);
  prune_low_side(ledger, r, rng, plan);
  finalize(plan);
  return plan;
}

std::vector<std::size_t> equi_depth_bins(std::span<const double> losses, std::size_t bins) {
  if (bins < 1) throw ConfigError("bin count must be >= 1");
  const std::size_t n = losses.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  std::vector<std::size_t> out(n, 0);
  const std::size_t base = n / bins;
  const std::size_t extra = n % bins;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < bins && pos < n; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) out[order[pos++]] = b;
  }
  // Equal losses straddling a boundary stay together in the lower bin.
  for (std::size_t k = 1; k < n; ++k) {
    if (losses[order[k]] == losses[order[k - 1]]) out[order[k]] = out[order[k - 1]];
  }
  return out;
}

EpochPlan plan_pa(const LossLedger& ledger, const LshIndex& lsh, double r, std::size_t bins, std::uint64_t seed) {
  check_ratio(r);
  if (lsh.size() != ledger.size()) throw DimensionError("LSH index and loss ledger cover different sample sets");
  auto plan = empty_plan(ledger.size());
  std::mt19937_64 rng(seed);
  prune_low_side(ledger, r, rng, plan);

  const double global = ledger.global_mean();
  std::vector<std::size_t> high;
  std::vector<double> high_loss;
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    if (!ledger.seen(i) || ledger.mean_loss(i) < global) continue;
    high.push_back(i);
    high_loss.push_back(ledger.mean_loss(i));
  }
  const auto bin_of = equi_depth_bins(high_loss, bins);

  std::map<std::pair<std::uint64_t, std::size_t>, std::vector<std::size_t>> buckets;
  for (std::size_t k = 0; k < high.size(); ++k) buckets[{lsh.code(high[k]), bin_of[k]}].push_back(high[k]);

  const double factor = 1.0 / (1.0 - r);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::int64_t bucket_id = 0;
  for (const auto& [key, members] : buckets) {
    for (auto id : members) plan.bucket[id] = bucket_id;
    ++bucket_id;
    if (members.size() < 2) continue;
    ++plan.stats.n_buckets_multi;
    for (auto id : members) {
      if (coin(rng) < r) {
        plan.rescale[id] = 0.0;
        ++plan.stats.n_pruned_bucket;
      } else {
        plan.rescale[id] = factor;
      }
    }
  }
  finalize(plan);
  return plan;
}

std::vector<double> apply_plan(const EpochPlan& plan, std::span<const std::size_t> ids, std::span<const double> losses) {
  if (ids.size() != losses.size()) throw DimensionError("apply_plan: ids and losses differ in length");
  std::vector<double> out(losses.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= plan.rescale.size() || !(plan.rescale[ids[k]] > 0.0))
      throw InternalError("apply_plan: sample " + std::to_string(ids[k]) + " is not in the epoch plan");
    out[k] = losses[k] * plan.rescale[ids[k]];
  }
  return out;
}

bool anneal_gate(std::size_t epoch, std::size_t total_epochs, double delta) {
  if (delta < 0.0 || delta > 1.0) throw ConfigError("anneal fraction must lie in [0,1]");
  const auto stop = static_cast<std::size_t>(std::floor(static_cast<double>(total_epochs) * (1.0 - delta) + 1e-9));
  return epoch < stop;
}

std::string prune_mode_name(PruneMode mode) {
  switch (mode) {
    case PruneMode::None:
      return "none";
    case PruneMode::InfoBatch:
      return "infobatch";
    case PruneMode::Pa:
      return "pa";
  }
  return "none";
}

PruneMode prune_mode_from_name(const std::string& name) {
  if (name == "none") return PruneMode::None;
  if (name == "infobatch") return PruneMode::InfoBatch;
  if (name == "pa") return PruneMode::Pa;
  throw ConfigError("unknown pruning mode '" + name + "' (expected none, infobatch or pa)");
}

}  // namespace kdsel
