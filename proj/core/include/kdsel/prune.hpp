#pragma once

// Per-epoch dynamic data pruning. InfoBatch drops below-mean-loss samples
// with probability r; the bucketed variant additionally groups above-mean
// samples by (LSH code, equi-depth loss bin) and prunes inside every bucket
// holding more than one sample. Survivors of a pruning draw have their loss
// multiplied by 1/(1-r).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kdsel {

// Running mean of each sample's loss over the epochs in which it was seen.
class LossLedger {
 public:
  explicit LossLedger(std::size_t samples = 0);

  void record(std::size_t id, double loss);
  bool seen(std::size_t id) const { return counts_.at(id) > 0; }
  std::size_t count(std::size_t id) const { return counts_.at(id); }
  // +infinity for samples never seen.
  double mean_loss(std::size_t id) const;
  // Mean of mean_loss() over seen samples; +infinity when nothing is seen.
  double global_mean() const;
  std::size_t size() const noexcept { return sums_.size(); }

 private:
  std::vector<double> sums_;
  std::vector<std::size_t> counts_;
};

// Sign random-hyperplane hashing with a single b-bit table.
class LshIndex {
 public:
  static LshIndex build(const std::vector<std::vector<double>>& samples, std::size_t bits, std::uint64_t seed);

  std::uint64_t code(std::size_t id) const { return codes_.at(id); }
  std::uint64_t hash(std::span<const double> x) const;
  std::size_t bits() const noexcept { return hyperplanes_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return codes_.size(); }

 private:
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> hyperplanes_;
  std::vector<std::uint64_t> codes_;
};

struct PruneStats {
  std::size_t epoch = 0;
  std::size_t n_total = 0;
  std::size_t n_kept = 0;
  std::size_t n_pruned_low = 0;
  std::size_t n_pruned_bucket = 0;
  std::size_t n_buckets_multi = 0;
};

struct EpochPlan {
  std::vector<std::size_t> kept;  // ascending sample ids
  std::vector<double> rescale;    // per sample; 0 for pruned samples
  std::vector<std::int64_t> bucket;  // per sample; -1 when not bucketed
  PruneStats stats;

  bool is_kept(std::size_t id) const { return rescale.at(id) > 0.0; }
};

EpochPlan plan_full(std::size_t samples);
EpochPlan plan_infobatch(const LossLedger& ledger, double r, std::uint64_t seed);
EpochPlan plan_pa(const LossLedger& ledger, const LshIndex& lsh, double r, std::size_t bins, std::uint64_t seed);

// Equi-depth bin index for each of `losses` (any order). Bin sizes differ by
// at most one before equal values are merged into the lower bin.
std::vector<std::size_t> equi_depth_bins(std::span<const double> losses, std::size_t bins);

// losses[k] belongs to sample ids[k]; returns losses multiplied by the plan's
// rescale factors. Throws InternalError for samples the plan pruned.
std::vector<double> apply_plan(const EpochPlan& plan, std::span<const std::size_t> ids, std::span<const double> losses);

// False during the final delta * total_epochs epochs.
bool anneal_gate(std::size_t epoch, std::size_t total_epochs, double delta);

enum class PruneMode { None, InfoBatch, Pa };
std::string prune_mode_name(PruneMode mode);
PruneMode prune_mode_from_name(const std::string& name);

}  // namespace kdsel
