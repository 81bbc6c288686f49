#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "kdsel/errors.hpp"
#include "kdsel/pipeline.hpp"
#include "kdsel/synthetic.hpp"

using namespace kdsel;

namespace {

TrainConfig fast_config() {
  TrainConfig c;
  c.window = 32;
  c.epochs = 4;
  c.batch_size = 16;
  c.seed = 3;
  return c;
}

Corpus small_corpus(std::uint64_t seed = 1) {
  SyntheticOptions o;
  o.series_per_family = 2;
  o.length = 400;
  o.seed = seed;
  return make_synthetic_corpus(o);
}

std::string model_bytes(const SelectorModel& m) {
  std::stringstream s;
  save_model(m, s);
  return s.str();
}

// Parameter bytes only; the saved file also echoes the run configuration.
std::vector<std::vector<float>> weights(const SelectorModel& m) {
  std::vector<std::vector<float>> out;
  for (const auto& p : m.params()) out.push_back(p.data);
  return out;
}

// Two visually distinct window classes: smooth sines (label 0) and
// alternating sawtooth (label 3).
std::vector<WindowSample> two_class_windows(std::size_t count, std::size_t window) {
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    WindowSample w;
    w.series_id = "s" + std::to_string(i);
    w.values.resize(window);
    const bool smooth = i % 2 == 0;
    for (std::size_t t = 0; t < window; ++t) {
      const double x = static_cast<double>(t + i);
      w.values[t] = smooth ? std::sin(2 * std::numbers::pi * x / 16.0) : (t % 2 ? 1.0 : -1.0) * (1.0 + 0.1 * (x / 8.0));
    }
    z_normalize(w.values);
    w.hard_label = smooth ? 0 : 3;
    w.performance.assign(kNumDetectors, 0.1);
    w.performance[static_cast<std::size_t>(w.hard_label)] = 0.9;
    w.supervised = true;
    out.push_back(std::move(w));
  }
  return out;
}

struct Recorder : TrainObserver {
  std::vector<TrainEvent> events;
  std::vector<BatchTrace> batches;
  std::vector<SelectorModel> checkpoints;
  void on_event(const TrainEvent& e) override { events.push_back(e); }
  void on_batch(const BatchTrace& b) override { batches.push_back(b); }
  void on_checkpoint(std::size_t, const SelectorModel& m) override { checkpoints.push_back(m); }
};

}  // namespace

TEST_CASE("majority vote picks the most frequent prediction, lowest index on ties") {
  std::vector<std::size_t> votes(kNumDetectors, 0);
  for (int p : {1, 1, 2, 1, 0}) ++votes[static_cast<std::size_t>(p)];
  CHECK(majority_vote(votes) == static_cast<DetectorKind>(1));
  std::vector<std::size_t> tie(kNumDetectors, 0);
  tie[0] = 2;
  tie[1] = 2;
  CHECK(majority_vote(tie) == static_cast<DetectorKind>(0));
  tie[0] = 0;
  tie[4] = 2;
  CHECK(majority_vote(tie) == static_cast<DetectorKind>(1));
}

TEST_CASE("selection over a series and the short-series fallback") {
  const auto model = SelectorModel::create(model_shape_for(fast_config(), 0), 1);
  const auto corpus = small_corpus();
  const auto r = select(model, corpus.front(), 16);
  CHECK(r.predictions.size() == (corpus.front().size() - 32) / 16 + 1);
  std::size_t total = 0;
  for (auto v : r.votes) total += v;
  CHECK(total == r.predictions.size());
  CHECK(r.selected == majority_vote(r.votes));
  CHECK_FALSE(r.fallback);
  const auto j = to_json(r);
  CHECK(j.at("windows") == r.predictions.size());
  CHECK(j.at("selected") == detector_name(r.selected));

  LabeledSeries tiny;
  tiny.id = "tiny";
  tiny.values.assign(20, 1.0);
  tiny.point_labels.assign(20, 0);
  const auto fb = select(model, tiny, 16);
  CHECK(fb.fallback);
  CHECK(fb.selected == DetectorKind::IForest);
  CHECK(fb.predictions.empty());
}

TEST_CASE("cross-entropy falls by at least half on a separable two-class set") {
  auto config = fast_config();
  config.epochs = 20;
  config.learning_rate = 0.05;
  const auto windows = two_class_windows(64, 32);
  const auto result = train(windows, config);
  REQUIRE(result.status == TrainStatus::Completed);
  std::vector<double> epoch_ce;
  for (const auto& e : result.events)
    if (e.kind == TrainEvent::Kind::Epoch) epoch_ce.push_back(e.loss.ce);
  REQUIRE(epoch_ce.size() == 20);
  CHECK(epoch_ce.back() <= 0.5 * epoch_ce.front());
  CHECK(window_accuracy(result.model, windows) == 1.0);
}

TEST_CASE("training is deterministic for a seed") {
  const auto corpus = small_corpus();
  const auto config = fast_config();
  const auto labeled = label_corpus(corpus, config);
  const auto a = train(labeled.windows, config);
  const auto b = train(labeled.windows, config);
  CHECK(model_bytes(a.model) == model_bytes(b.model));
  auto other = config;
  other.seed = 4;
  CHECK(model_bytes(train(labeled.windows, other).model) != model_bytes(a.model));
}

TEST_CASE("pruning at r = 0 trains exactly like no pruning") {
  const auto labeled = label_corpus(small_corpus(), fast_config());
  auto none = fast_config();
  auto ib = none;
  ib.prune = PruneMode::InfoBatch;
  ib.prune_ratio = 0.0;
  auto pa = none;
  pa.prune = PruneMode::Pa;
  pa.prune_ratio = 0.0;
  const auto base = weights(train(labeled.windows, none).model);
  CHECK(weights(train(labeled.windows, ib).model) == base);
  CHECK(weights(train(labeled.windows, pa).model) == base);
}

TEST_CASE("logged batch losses can be recomputed from the trace") {
  const auto corpus = small_corpus();
  auto config = fast_config();
  config.pisl = true;
  config.mki = true;
  config.text_dim = 32;
  config.proj_dim = 8;
  config.prune = PruneMode::InfoBatch;
  config.prune_ratio = 0.5;
  const auto labeled = label_corpus(corpus, config);
  const auto embedder = make_embedder(config);
  Recorder rec;
  const auto result = train(labeled.windows, config, &rec, embedder.get());
  REQUIRE(result.status == TrainStatus::Completed);
  REQUIRE(rec.checkpoints.size() == config.epochs);

  const auto samples = make_training_samples(labeled.windows, config, embedder.get());
  std::size_t checked = 0;
  for (const auto& b : rec.batches) {
    // The parameters before the first batch of epoch e are the checkpoint of
    // epoch e-1.
    if (b.batch != 0 || b.epoch == 0) continue;
    const auto obj = batch_objective(rec.checkpoints[b.epoch - 1], samples, b.ids, b.rescale, config, nullptr);
    CHECK(obj.loss.total == doctest::Approx(b.loss.total).epsilon(1e-6));
    CHECK(obj.loss.ce == doctest::Approx(b.loss.ce).epsilon(1e-6));
    CHECK(obj.loss.mki == doctest::Approx(b.loss.mki).epsilon(1e-6));
    ++checked;
  }
  CHECK(checked == config.epochs - 1);

  // Epoch 0 trains on every sample; later epochs report what was pruned.
  REQUIRE(result.prune_history.size() == config.epochs);
  CHECK(result.prune_history[0].n_kept == samples.size());
  CHECK(result.prune_history[1].n_kept < samples.size());
  const auto last = result.prune_history.back();
  CHECK(last.n_kept == samples.size());  // annealed

  std::size_t batch_events = 0;
  for (const auto& e : result.events) {
    const auto j = to_json(e);
    CHECK(j.at("loss").contains("total"));
    if (e.kind == TrainEvent::Kind::Batch) {
      ++batch_events;
      CHECK(j.at("type") == "batch");
    } else {
      CHECK(j.contains("prune"));
    }
  }
  CHECK(batch_events == rec.batches.size());
}

TEST_CASE("mini-batches of one skip the contrastive term") {
  auto config = fast_config();
  config.mki = true;
  config.text_dim = 16;
  config.proj_dim = 4;
  std::vector<TrainingSample> samples(2);
  for (auto& s : samples) {
    s.values.assign(32, 0.0);
    s.values[3] = 1.0;
    s.hard_label = 2;
    s.soft = std::vector<double>(kNumDetectors, 1.0 / kNumDetectors);
    s.text.assign(16, 0.25);
  }
  auto model = SelectorModel::create(model_shape_for(config, 16), 1);
  const std::vector<std::size_t> one{0};
  const std::vector<double> w{1.0};
  NumericCounters counters;
  const auto obj = batch_objective(model, samples, one, w, config, nullptr, &counters);
  CHECK(obj.loss.mki == 0.0);
  CHECK(counters.skipped_mki_batches == 1);
}

TEST_CASE("evaluation report invariants") {
  const auto corpus = small_corpus(2);
  const auto config = fast_config();
  const auto model = train(label_corpus(corpus, config).windows, config).model;
  const auto report = evaluate_selector(model, corpus, config);
  REQUIRE_FALSE(report.series.empty());
  double random_sum = 0.0, mean_sum = 0.0;
  for (const auto& row : report.series) {
    for (double a : row.detector_auc) CHECK(row.oracle_auc >= a);
    CHECK(row.oracle_auc == row.detector_auc[static_cast<std::size_t>(row.oracle)]);
    CHECK(row.selector_auc <= row.oracle_auc);
    CHECK(std::find(row.detector_auc.begin(), row.detector_auc.end(), row.random_auc) != row.detector_auc.end());
    random_sum += row.random_auc;
    double m = 0.0;
    for (double a : row.detector_auc) m += a;
    mean_sum += m / static_cast<double>(row.detector_auc.size());
  }
  const double n = static_cast<double>(report.series.size());
  CHECK(report.oracle_avg >= report.selector_avg);
  CHECK(report.oracle_avg >= *std::max_element(report.detector_avg.begin(), report.detector_avg.end()));
  CHECK(report.random_avg == doctest::Approx(random_sum / n));
  // A single uniform pick per series: close to the mean, not equal to it.
  CHECK(std::abs(random_sum / n - mean_sum / n) < 0.3);

  std::ostringstream csv;
  write_report_csv(report, csv);
  const auto text = csv.str();
  CHECK(text.rfind("series_id,selected,oracle,", 0) == 0);
  CHECK(text.find("\nAVERAGE,") != std::string::npos);
  const auto j = to_json(report);
  CHECK(j.at("series_evaluated") == report.series.size());
  CHECK(j.at("average_auc_pr").at("single").size() == kNumDetectors);

  // Same inputs, same report.
  std::ostringstream again;
  write_report_csv(evaluate_selector(model, corpus, config), again);
  CHECK(again.str() == text);
}

TEST_CASE("detection falls back when the selected detector cannot run") {
  LabeledSeries s;
  s.id = "short";
  s.values = {0.0, 1.0, 0.0, 5.0, 0.0, 1.0, 0.0, 1.0};
  s.point_labels = {0, 0, 0, 1, 0, 0, 0, 0};
  DetectorParams p;
  const auto r = detect_and_score(s, DetectorKind::MP, p, false);
  CHECK(r.requested == DetectorKind::MP);
  CHECK(r.fallback_used);
  CHECK(r.primary.detector != DetectorKind::MP);
  REQUIRE(r.primary.trace.has_value());
  CHECK(r.primary.auc_pr.has_value());

  const auto cmp = detect_and_score(small_corpus().front(), DetectorKind::HBOS, p, true);
  CHECK_FALSE(cmp.fallback_used);
  CHECK(cmp.alternatives.size() == kNumDetectors);
  const auto j = to_json(cmp, false);
  CHECK_FALSE(j.at("result").contains("scores"));
}

TEST_CASE("training without supervision is rejected") {
  std::vector<WindowSample> none(3);
  CHECK_THROWS_AS(train(none, fast_config()), ValidationError);
}
