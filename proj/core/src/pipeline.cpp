#include "kdsel/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>
#include <unordered_map>

#include "kdsel/errors.hpp"
#include "kdsel/metrics.hpp"

namespace kdsel {

namespace {

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Results
// are written by index, so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futures;
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    }));
  }
  for (auto& f : futures) f.get();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

// --- labeling ---------------------------------------------------------------

std::vector<WindowSample> LabeledWindows::supervised() const {
  std::vector<WindowSample> out;
  for (const auto& w : windows)
    if (w.supervised) out.push_back(w);
  return out;
}

LabeledWindows label_corpus(const Corpus& corpus, const TrainConfig& config) {
  config.validate();
  const auto params = config.detector_params();
  const std::size_t stride = config.effective_stride();
  std::vector<std::vector<WindowSample>> per_series(corpus.size());
  std::vector<std::size_t> skips(corpus.size(), 0);
  std::vector<std::uint8_t> short_series(corpus.size(), 0);
  parallel_for(corpus.size(), [&](std::size_t i) {
    const auto& s = corpus[i];
    auto windows = extract_windows(s, config.window, stride);
    if (windows.empty()) {
      short_series[i] = 1;
      return;
    }
    if (s.positives() > 0) {
      const auto zoo = score_all(s, params);
      skips[i] = zoo.skipped.size();
      label_windows(windows, s, zoo);
    }
    const auto text = render_metadata(describe(s), s.dataset_name);
    for (auto& w : windows) w.metadata_text = text;
    per_series[i] = std::move(windows);
  });
  LabeledWindows out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.stats.skipped_short += short_series[i];
    out.stats.windows += per_series[i].size();
    out.detector_skips += skips[i];
    for (auto& w : per_series[i]) out.windows.push_back(std::move(w));
  }
  return out;
}

LabeledWindows apply_label_table(const Corpus& corpus, const TrainConfig& config, std::span<const LabelRow> rows) {
  std::unordered_map<std::string, const LabelRow*> by_id;
  for (const auto& r : rows) by_id[r.window_id] = &r;
  LabeledWindows out;
  for (const auto& s : corpus) {
    auto windows = extract_windows(s, config.window, config.effective_stride(), &out.stats);
    const auto text = render_metadata(describe(s), s.dataset_name);
    for (auto& w : windows) {
      w.metadata_text = text;
      auto it = by_id.find(w.window_id());
      if (it != by_id.end()) {
        w.performance = it->second->performance;
        w.hard_label = it->second->hard_label;
        w.supervised = true;
      }
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

std::unique_ptr<TextEmbedder> make_embedder(const TrainConfig& config) {
  if (config.embedder == "precomputed")
    return std::make_unique<PrecomputedEmbedder>(PrecomputedEmbedder::load(config.embedding_file));
  return std::make_unique<FeatureHashEmbedder>(config.text_dim);
}

// --- training ---------------------------------------------------------------

nlohmann::json to_json(const TrainEvent& e) {
  nlohmann::json j = {
      {"type", e.kind == TrainEvent::Kind::Batch ? "batch" : "epoch"},
      {"epoch", e.epoch},
      {"batch", e.batch},
      {"loss", {{"ce", e.loss.ce}, {"pisl", e.loss.pisl}, {"mki", e.loss.mki}, {"total", e.loss.total}}},
      {"wall_ms", e.wall_ms},
      {"samples_per_sec", e.samples_per_sec},
      {"samples", e.samples},
  };
  if (e.prune) {
    j["prune"] = {{"epoch", e.prune->epoch},
                  {"n_total", e.prune->n_total},
                  {"n_kept", e.prune->n_kept},
                  {"n_pruned_low", e.prune->n_pruned_low},
                  {"n_pruned_bucket", e.prune->n_pruned_bucket},
                  {"n_buckets_multi", e.prune->n_buckets_multi}};
  }
  return j;
}

std::string train_status_name(TrainStatus status) {
  switch (status) {
    case TrainStatus::Completed:
      return "completed";
    case TrainStatus::NumericFault:
      return "numeric-fault";
    case TrainStatus::Cancelled:
      return "cancelled";
  }
  return "completed";
}

std::vector<TrainingSample> make_training_samples(std::span<const WindowSample> windows, const TrainConfig& config,
                                                  const TextEmbedder* embedder) {
  std::vector<TrainingSample> out;
  out.reserve(windows.size());
  std::unordered_map<std::string, std::vector<double>> text_cache;
  for (const auto& w : windows) {
    if (!w.supervised) continue;
    TrainingSample s;
    s.values = w.values;
    s.hard_label = w.hard_label;
    s.soft = soft_label(w.performance, config.t_soft);
    if (config.mki) {
      if (embedder == nullptr) throw ConfigError("metadata alignment needs a text embedder");
      auto it = text_cache.find(w.metadata_text);
      if (it == text_cache.end()) it = text_cache.emplace(w.metadata_text, embedder->embed(w.metadata_text).vector).first;
      s.text = it->second;
    }
    out.push_back(std::move(s));
  }
  return out;
}

ModelShape model_shape_for(const TrainConfig& config, std::size_t text_dim) {
  ModelShape shape;
  shape.encoder = config.encoder;
  shape.window = config.window;
  shape.classes = kNumDetectors;
  shape.text_dim = config.mki ? text_dim : 0;
  shape.proj_dim = config.mki ? config.proj_dim : 0;
  return shape;
}

BatchObjective batch_objective(const SelectorModel& model, std::span<const TrainingSample> samples,
                               std::span<const std::size_t> ids, std::span<const double> rescale,
                               const TrainConfig& config, Gradients* grads, NumericCounters* counters) {
  const std::size_t batch = ids.size();
  if (rescale.size() != batch) throw DimensionError("batch_objective: rescale and ids differ in length");
  BatchObjective out;
  out.per_sample.assign(batch, 0.0);
  if (batch == 0) return out;
  const double alpha = config.pisl ? config.alpha : 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch);

  std::vector<ForwardResult> fwd(batch);
  std::vector<std::vector<double>> dlogits(batch);
  double ce_sum = 0.0;
  double pisl_sum = 0.0;
  for (std::size_t k = 0; k < batch; ++k) {
    const auto& s = samples[ids[k]];
    fwd[k] = forward(model, s.values);
    const auto ce = ce_loss(fwd[k].probs, s.hard_label, counters);
    LossGrad pisl;
    if (config.pisl) pisl = pisl_loss(fwd[k].probs, s.soft, counters);
    out.per_sample[k] = (1.0 - alpha) * ce.loss + alpha * pisl.loss;
    ce_sum += rescale[k] * ce.loss;
    pisl_sum += rescale[k] * pisl.loss;
    if (grads) {
      const double w = rescale[k] * inv_b;
      dlogits[k].resize(ce.dlogits.size());
      for (std::size_t j = 0; j < ce.dlogits.size(); ++j) {
        double g = (1.0 - alpha) * ce.dlogits[j];
        if (config.pisl) g += alpha * pisl.dlogits[j];
        dlogits[k][j] = w * g;
      }
    }
  }

  double mki = 0.0;
  bool mki_active = false;
  std::vector<std::vector<double>> dfeatures(batch);
  if (config.mki) {
    if (batch < 2) {
      if (counters) ++counters->skipped_mki_batches;
    } else {
      mki_active = true;
      std::vector<ProjectionResult> pt(batch), pk(batch);
      std::vector<std::vector<double>> zt(batch), zk(batch);
      for (std::size_t k = 0; k < batch; ++k) {
        pt[k] = project(model, Head::Series, fwd[k].features);
        pk[k] = project(model, Head::Text, samples[ids[k]].text);
        zt[k] = pt[k].output;
        zk[k] = pk[k].output;
      }
      const auto nce = infonce_loss(zt, zk, config.tau_nce, rescale);
      mki = nce.loss;
      for (std::size_t k = 0; k < batch; ++k) out.per_sample[k] += config.lambda * nce.per_sample[k];
      if (grads) {
        for (std::size_t k = 0; k < batch; ++k) {
          std::vector<double> ds(nce.d_series[k]), dt(nce.d_text[k]);
          for (auto& v : ds) v *= config.lambda;
          for (auto& v : dt) v *= config.lambda;
          dfeatures[k] = backward_projection(model, Head::Series, pt[k], ds, *grads);
          backward_projection(model, Head::Text, pk[k], dt, *grads);
        }
      }
    }
  }

  out.loss = combine(ce_sum * inv_b, pisl_sum * inv_b, mki, config.alpha, config.lambda,
                     LossFlags{config.pisl, mki_active});
  if (grads) {
    for (std::size_t k = 0; k < batch; ++k) backward(model, fwd[k], dlogits[k], dfeatures[k], *grads);
  }
  return out;
}

TrainResult train(std::span<const WindowSample> windows, const TrainConfig& config, TrainObserver* observer,
                  const TextEmbedder* embedder) {
  config.validate();
  std::unique_ptr<TextEmbedder> owned;
  if (config.mki && embedder == nullptr) {
    owned = make_embedder(config);
    embedder = owned.get();
  }
  const auto samples = make_training_samples(windows, config, embedder);
  if (samples.empty()) throw ValidationError("no supervised windows to train on (no window span holds an anomaly)");
  const std::size_t n = samples.size();
  const std::size_t text_dim = config.mki ? samples.front().text.size() : 0;

  TrainResult result;
  result.model = SelectorModel::create(model_shape_for(config, text_dim), config.seed);
  result.model.config_json = to_json(config).dump();
  SelectorModel checkpoint = result.model;

  LossLedger ledger(n);
  std::optional<LshIndex> lsh;
  if (config.prune == PruneMode::Pa) {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(n);
    for (const auto& s : samples) {
      auto v = s.values;
      v.insert(v.end(), s.text.begin(), s.text.end());
      vectors.push_back(std::move(v));
    }
    lsh = LshIndex::build(vectors, config.lsh_bits, mix_seed(config.seed, 0x15A));
  }

  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5F));
  const SgdOptions sgd{config.learning_rate, config.clip_bound, config.momentum};
  OptimizerState opt_state;
  Gradients grads(result.model);

  auto emit = [&](TrainEvent ev) {
    if (observer) observer->on_event(ev);
    result.events.push_back(std::move(ev));
  };

  using Clock = std::chrono::steady_clock;
  try {
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      if (observer && observer->cancelled()) {
        result.status = TrainStatus::Cancelled;
        result.message = "cancelled before epoch " + std::to_string(epoch);
        break;
      }
      const auto epoch_start = Clock::now();
      const bool prune_on = config.prune != PruneMode::None && anneal_gate(epoch, config.epochs, config.anneal_fraction);
      EpochPlan plan;
      const auto plan_seed = mix_seed(config.seed, 1000 + epoch);
      if (!prune_on) {
        plan = plan_full(n);
      } else if (config.prune == PruneMode::InfoBatch) {
        plan = plan_infobatch(ledger, config.prune_ratio, plan_seed);
      } else {
        plan = plan_pa(ledger, *lsh, config.prune_ratio, config.bins, plan_seed);
      }
      plan.stats.epoch = epoch;
      result.prune_history.push_back(plan.stats);

      std::vector<std::size_t> order = plan.kept;
      std::shuffle(order.begin(), order.end(), shuffle_rng);

      LossBreakdown epoch_loss;
      std::size_t batch_index = 0;
      bool stop = false;
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
        if (observer && observer->cancelled()) {
          stop = true;
          break;
        }
        const auto batch_start = Clock::now();
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        const std::span<const std::size_t> ids(order.data() + begin, end - begin);
        std::vector<double> rescale(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k) rescale[k] = plan.rescale[ids[k]];

        grads.zero();
        const auto obj = batch_objective(result.model, samples, ids, rescale, config, &grads, &result.counters);
        if (!std::isfinite(obj.loss.total)) throw NumericFault("non-finite loss at epoch " + std::to_string(epoch));
        if (observer) observer->on_batch(BatchTrace{epoch, batch_index, {ids.begin(), ids.end()}, rescale, obj.loss});
        sgd_step(result.model, grads, sgd, &opt_state);
        for (std::size_t k = 0; k < ids.size(); ++k) ledger.record(ids[k], obj.per_sample[k]);

        const double w = static_cast<double>(ids.size());
        epoch_loss.ce += w * obj.loss.ce;
        epoch_loss.pisl += w * obj.loss.pisl;
        epoch_loss.mki += w * obj.loss.mki;
        epoch_loss.total += w * obj.loss.total;

        TrainEvent ev;
        ev.kind = TrainEvent::Kind::Batch;
        ev.epoch = epoch;
        ev.batch = batch_index;
        ev.loss = obj.loss;
        ev.samples = ids.size();
        ev.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - batch_start).count();
        ev.samples_per_sec = ev.wall_ms > 0.0 ? 1000.0 * w / ev.wall_ms : 0.0;
        emit(std::move(ev));
      }
      if (stop) {
        result.status = TrainStatus::Cancelled;
        result.message = "cancelled during epoch " + std::to_string(epoch);
        break;
      }
      const double kept = static_cast<double>(std::max<std::size_t>(1, order.size()));
      epoch_loss.ce /= kept;
      epoch_loss.pisl /= kept;
      epoch_loss.mki /= kept;
      epoch_loss.total /= kept;

      TrainEvent ev;
      ev.kind = TrainEvent::Kind::Epoch;
      ev.epoch = epoch;
      ev.batch = batch_index;
      ev.loss = epoch_loss;
      ev.prune = plan.stats;
      ev.samples = order.size();
      ev.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - epoch_start).count();
      ev.samples_per_sec = ev.wall_ms > 0.0 ? 1000.0 * static_cast<double>(order.size()) / ev.wall_ms : 0.0;
      emit(std::move(ev));

      checkpoint = result.model;
      result.epochs_completed = epoch + 1;
      if (observer) observer->on_checkpoint(epoch, checkpoint);
    }
  } catch (const NumericFault& e) {
    result.model = checkpoint;
    result.status = TrainStatus::NumericFault;
    result.message = e.what();
  }
  return result;
}

// --- selection --------------------------------------------------------------

DetectorKind majority_vote(std::span<const std::size_t> votes) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < votes.size(); ++j)
    if (votes[j] > votes[best]) best = j;
  return detector_at(static_cast<int>(best));
}

SelectionResult select(const SelectorModel& model, const LabeledSeries& series, std::size_t stride) {
  SelectionResult r;
  r.series_id = series.id;
  r.votes.assign(model.shape().classes, 0);
  const auto windows = extract_windows(series, model.shape().window, std::max<std::size_t>(1, stride));
  if (windows.empty()) {
    r.fallback = true;
    r.selected = DetectorKind::IForest;
    return r;
  }
  for (const auto& w : windows) {
    const auto fr = forward(model, w.values);
    const int pred = argmax_lowest(fr.logits);
    r.predictions.push_back(pred);
    ++r.votes[static_cast<std::size_t>(pred)];
  }
  r.selected = majority_vote(r.votes);
  return r;
}

nlohmann::json to_json(const SelectionResult& r) {
  nlohmann::json votes = nlohmann::json::object();
  for (std::size_t j = 0; j < r.votes.size(); ++j) votes[std::string(detector_name(detector_at(static_cast<int>(j))))] = r.votes[j];
  return {{"series_id", r.series_id},
          {"selected", std::string(detector_name(r.selected))},
          {"selected_index", detector_index(r.selected)},
          {"votes", votes},
          {"vote_vector", r.votes},
          {"predictions", r.predictions},
          {"windows", r.predictions.size()},
          {"fallback", r.fallback}};
}

// --- detection --------------------------------------------------------------

namespace {

DetectionRun run_one(const LabeledSeries& series, DetectorKind kind, const DetectorParams& params) {
  DetectionRun run;
  run.detector = kind;
  try {
    run.trace = run_detector(kind, series, params);
    if (series.positives() > 0) run.auc_pr = auc_pr(run.trace->scores, series.point_labels);
  } catch (const DetectorSkip& e) {
    run.skip_reason = e.what();
  }
  return run;
}

nlohmann::json run_json(const DetectionRun& run, bool include_scores) {
  nlohmann::json j = {{"detector", std::string(detector_name(run.detector))}, {"skipped", !run.trace.has_value()}};
  j["auc_pr"] = run.auc_pr ? nlohmann::json(*run.auc_pr) : nlohmann::json(nullptr);
  if (!run.skip_reason.empty()) j["skip_reason"] = run.skip_reason;
  if (include_scores && run.trace) j["scores"] = run.trace->scores;
  return j;
}

}  // namespace

DetectionResult detect_and_score(const LabeledSeries& series, DetectorKind selected, const DetectorParams& params,
                                 bool compare, std::span<const std::size_t> votes) {
  DetectionResult out;
  out.series_id = series.id;
  out.requested = selected;

  std::vector<DetectorKind> order{selected};
  std::vector<int> rest;
  for (auto k : kAllDetectors)
    if (k != selected) rest.push_back(detector_index(k));
  if (!votes.empty()) {
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
      return votes[static_cast<std::size_t>(a)] > votes[static_cast<std::size_t>(b)];
    });
  }
  for (int r : rest) order.push_back(detector_at(r));

  std::vector<std::optional<DetectionRun>> cache(kNumDetectors);
  auto get = [&](DetectorKind k) -> const DetectionRun& {
    auto& slot = cache[static_cast<std::size_t>(detector_index(k))];
    if (!slot) slot = run_one(series, k, params);
    return *slot;
  };
  for (auto k : order) {
    const auto& run = get(k);
    if (run.trace) {
      out.primary = run;
      out.fallback_used = k != selected;
      break;
    }
  }
  if (!out.primary.trace) {
    out.primary = get(selected);
  }
  if (compare) {
    for (auto k : kAllDetectors) out.alternatives.push_back(get(k));
  }
  return out;
}

nlohmann::json to_json(const DetectionResult& r, bool include_scores) {
  nlohmann::json j = {{"series_id", r.series_id},
                      {"requested", std::string(detector_name(r.requested))},
                      {"fallback_used", r.fallback_used},
                      {"result", run_json(r.primary, include_scores)}};
  nlohmann::json alts = nlohmann::json::array();
  for (const auto& a : r.alternatives) alts.push_back(run_json(a, include_scores));
  j["alternatives"] = alts;
  return j;
}

// --- evaluation -------------------------------------------------------------

EvalReport evaluate_selector(const SelectorModel& model, const Corpus& test, const TrainConfig& config) {
  const auto params = config.detector_params();
  EvalReport report;
  report.detector_avg.assign(kNumDetectors, 0.0);
  std::vector<std::optional<SeriesReport>> rows(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto& s = test[i];
    if (s.positives() == 0) return;
    SeriesReport row;
    row.series_id = s.id;
    row.detector_auc.assign(kNumDetectors, 0.0);
    std::vector<bool> runnable(kNumDetectors, false);
    const auto zoo = score_all(s, params);
    for (const auto& t : zoo.traces) {
      row.detector_auc[static_cast<std::size_t>(detector_index(t.detector))] = auc_pr(t.scores, s.point_labels);
      runnable[static_cast<std::size_t>(detector_index(t.detector))] = true;
    }
    const auto sel = select(model, s, config.effective_stride());
    row.votes = sel.votes;
    row.fallback = sel.fallback;
    // Same fallback order as detect_and_score: selected first, then by votes.
    std::vector<int> order(kNumDetectors);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (a == detector_index(sel.selected)) return b != a;
      if (b == detector_index(sel.selected)) return false;
      return sel.votes[static_cast<std::size_t>(a)] > sel.votes[static_cast<std::size_t>(b)];
    });
    row.selected = sel.selected;
    for (int d : order) {
      if (runnable[static_cast<std::size_t>(d)]) {
        row.selected = detector_at(d);
        break;
      }
    }
    row.selector_auc = row.detector_auc[static_cast<std::size_t>(detector_index(row.selected))];
    const int best = argmax_lowest(row.detector_auc);
    row.oracle = detector_at(best);
    row.oracle_auc = row.detector_auc[static_cast<std::size_t>(best)];
    rows[i] = std::move(row);
  });

  std::mt19937_64 rng(mix_seed(config.seed, 0xE7A1));
  std::uniform_int_distribution<std::size_t> pick(0, kNumDetectors - 1);
  std::size_t hits = 0;
  for (auto& r : rows) {
    if (!r) {
      ++report.skipped_no_anomaly;
      continue;
    }
    r->random_auc = r->detector_auc[pick(rng)];
    report.selector_avg += r->selector_auc;
    report.oracle_avg += r->oracle_auc;
    report.random_avg += r->random_auc;
    for (std::size_t j = 0; j < kNumDetectors; ++j) report.detector_avg[j] += r->detector_auc[j];
    if (r->selector_auc == r->oracle_auc) ++hits;
    report.series.push_back(std::move(*r));
  }
  if (!report.series.empty()) {
    const double n = static_cast<double>(report.series.size());
    report.selector_avg /= n;
    report.oracle_avg /= n;
    report.random_avg /= n;
    for (auto& v : report.detector_avg) v /= n;
    report.selection_accuracy = static_cast<double>(hits) / n;
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json singles = nlohmann::json::object();
  for (std::size_t j = 0; j < kNumDetectors; ++j)
    singles[std::string(detector_name(detector_at(static_cast<int>(j))))] = report.detector_avg[j];
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.series) {
    nlohmann::json aucs = nlohmann::json::object();
    for (std::size_t j = 0; j < kNumDetectors; ++j)
      aucs[std::string(detector_name(detector_at(static_cast<int>(j))))] = r.detector_auc[j];
    rows.push_back({{"series_id", r.series_id},
                    {"selected", std::string(detector_name(r.selected))},
                    {"fallback", r.fallback},
                    {"votes", r.votes},
                    {"selector_auc_pr", r.selector_auc},
                    {"oracle", std::string(detector_name(r.oracle))},
                    {"oracle_auc_pr", r.oracle_auc},
                    {"random_auc_pr", r.random_auc},
                    {"detector_auc_pr", aucs}});
  }
  return {{"series_evaluated", report.series.size()},
          {"series_skipped_no_anomaly", report.skipped_no_anomaly},
          {"average_auc_pr",
           {{"selector", report.selector_avg}, {"oracle", report.oracle_avg}, {"random", report.random_avg}, {"single", singles}}},
          {"selection_accuracy", report.selection_accuracy},
          {"series", rows}};
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
  out << "series_id,selected,oracle,selector_auc_pr,oracle_auc_pr,random_auc_pr";
  for (auto k : kAllDetectors) out << ",auc_pr_" << detector_name(k);
  out << '\n';
  const auto old = out.precision(17);
  for (const auto& r : report.series) {
    out << r.series_id << ',' << detector_name(r.selected) << ',' << detector_name(r.oracle) << ',' << r.selector_auc
        << ',' << r.oracle_auc << ',' << r.random_auc;
    for (double a : r.detector_auc) out << ',' << a;
    out << '\n';
  }
  out << "AVERAGE,,," << report.selector_avg << ',' << report.oracle_avg << ',' << report.random_avg;
  for (double a : report.detector_avg) out << ',' << a;
  out << '\n';
  out.precision(old);
}

double window_accuracy(const SelectorModel& model, std::span<const WindowSample> windows) {
  std::size_t total = 0;
  std::size_t hits = 0;
  for (const auto& w : windows) {
    if (!w.supervised) continue;
    ++total;
    const auto fr = forward(model, w.values);
    if (argmax_lowest(fr.logits) == w.hard_label) ++hits;
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace kdsel
