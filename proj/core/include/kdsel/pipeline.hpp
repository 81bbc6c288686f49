#pragma once

// End-to-end orchestration: labeling windows with the detector zoo, the
// training loop (combined objectives + per-epoch pruning), per-series
// selection by majority vote, detection and evaluation.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kdsel/config.hpp"
#include "kdsel/detectors.hpp"
#include "kdsel/embedding.hpp"
#include "kdsel/losses.hpp"
#include "kdsel/metrics.hpp"
#include "kdsel/prune.hpp"
#include "kdsel/selector.hpp"
#include "kdsel/series.hpp"

namespace kdsel {

// --- labeling ---------------------------------------------------------------

struct LabeledWindows {
  std::vector<WindowSample> windows;  // every window; check `supervised`
  WindowStats stats;
  std::size_t detector_skips = 0;

  std::vector<WindowSample> supervised() const;
};

LabeledWindows label_corpus(const Corpus& corpus, const TrainConfig& config);

// Applies a previously exported label table to freshly extracted windows.
LabeledWindows apply_label_table(const Corpus& corpus, const TrainConfig& config, std::span<const LabelRow> rows);

std::unique_ptr<TextEmbedder> make_embedder(const TrainConfig& config);

// --- training ---------------------------------------------------------------

struct TrainEvent {
  enum class Kind { Batch, Epoch };
  Kind kind = Kind::Batch;
  std::size_t epoch = 0;
  std::size_t batch = 0;  // batch index; for epoch events, the batch count
  LossBreakdown loss;
  std::optional<PruneStats> prune;
  double wall_ms = 0.0;
  double samples_per_sec = 0.0;
  std::size_t samples = 0;
};

nlohmann::json to_json(const TrainEvent& event);

struct BatchTrace {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::vector<std::size_t> ids;
  std::vector<double> rescale;
  LossBreakdown loss;
};

class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_event(const TrainEvent&) {}
  virtual void on_batch(const BatchTrace&) {}
  // Called with the parameters at the end of every completed epoch.
  virtual void on_checkpoint(std::size_t /*epoch*/, const SelectorModel&) {}
  virtual bool cancelled() const { return false; }
};

enum class TrainStatus { Completed, NumericFault, Cancelled };
std::string train_status_name(TrainStatus status);

struct TrainResult {
  SelectorModel model;
  TrainStatus status = TrainStatus::Completed;
  std::string message;
  std::vector<TrainEvent> events;
  std::vector<PruneStats> prune_history;
  std::size_t epochs_completed = 0;
  NumericCounters counters;
};

// Inputs of the loss for one training sample, precomputed once per run.
struct TrainingSample {
  std::vector<double> values;
  int hard_label = -1;
  std::vector<double> soft;
  std::vector<double> text;  // empty unless metadata alignment is on
};

std::vector<TrainingSample> make_training_samples(std::span<const WindowSample> windows, const TrainConfig& config,
                                                  const TextEmbedder* embedder);

struct BatchObjective {
  LossBreakdown loss;
  std::vector<double> per_sample;  // unscaled per-sample objective, for the loss ledger
};

// Weighted mini-batch objective; adds its gradient into `grads` when given.
BatchObjective batch_objective(const SelectorModel& model, std::span<const TrainingSample> samples,
                               std::span<const std::size_t> ids, std::span<const double> rescale,
                               const TrainConfig& config, Gradients* grads, NumericCounters* counters = nullptr);

ModelShape model_shape_for(const TrainConfig& config, std::size_t text_dim);

TrainResult train(std::span<const WindowSample> windows, const TrainConfig& config, TrainObserver* observer = nullptr,
                  const TextEmbedder* embedder = nullptr);

// --- selection, detection, evaluation ---------------------------------------

struct SelectionResult {
  std::string series_id;
  std::vector<int> predictions;
  std::vector<std::size_t> votes;
  DetectorKind selected = DetectorKind::IForest;
  bool fallback = false;  // series shorter than L
};

nlohmann::json to_json(const SelectionResult& result);

// Argmax of votes with the lowest index winning ties.
DetectorKind majority_vote(std::span<const std::size_t> votes);

SelectionResult select(const SelectorModel& model, const LabeledSeries& series, std::size_t stride);

struct DetectionRun {
  DetectorKind detector = DetectorKind::IForest;
  std::optional<AnomalyScoreTrace> trace;
  std::optional<double> auc_pr;  // absent when the series has no anomalous point
  std::string skip_reason;
};

struct DetectionResult {
  std::string series_id;
  DetectorKind requested = DetectorKind::IForest;
  DetectionRun primary;
  bool fallback_used = false;
  std::vector<DetectionRun> alternatives;  // every detector, in compare mode
};

nlohmann::json to_json(const DetectionResult& result, bool include_scores = true);

// Runs `selected`; when it cannot run on the series, falls back through the
// other detectors in decreasing vote order (index order without votes).
DetectionResult detect_and_score(const LabeledSeries& series, DetectorKind selected, const DetectorParams& params,
                                 bool compare, std::span<const std::size_t> votes = {});

struct SeriesReport {
  std::string series_id;
  DetectorKind selected = DetectorKind::IForest;
  bool fallback = false;
  std::vector<std::size_t> votes;
  std::vector<double> detector_auc;  // one per detector; 0 when skipped
  double selector_auc = 0.0;
  DetectorKind oracle = DetectorKind::IForest;
  double oracle_auc = 0.0;
  double random_auc = 0.0;
};

struct EvalReport {
  std::vector<SeriesReport> series;
  std::size_t skipped_no_anomaly = 0;
  double selector_avg = 0.0;
  double oracle_avg = 0.0;
  double random_avg = 0.0;
  std::vector<double> detector_avg;  // single-detector baselines
  double selection_accuracy = 0.0;   // fraction of series where the pick matches the oracle AUC-PR
};

EvalReport evaluate_selector(const SelectorModel& model, const Corpus& test, const TrainConfig& config);
nlohmann::json to_json(const EvalReport& report);
void write_report_csv(const EvalReport& report, std::ostream& out);

// Top-1 agreement between the classifier's argmax and the hard labels of the
// supervised windows.
double window_accuracy(const SelectorModel& model, std::span<const WindowSample> windows);

}  // namespace kdsel
