// kdselect: command-line front end for the selector toolkit.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "kdsel/errors.hpp"
#include "kdsel/pipeline.hpp"
#include "kdsel/synthetic.hpp"
#include "service/server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : kdsel::Error {
  using kdsel::Error::Error;
};

kdsel::Corpus read_corpus(const fs::path& path, const fs::path& metadata) {
  auto corpus = kdsel::load_corpus(path);
  if (!metadata.empty()) kdsel::apply_metadata(corpus, kdsel::load_metadata_sidecar(metadata));
  return corpus;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw kdsel::Error("cannot write " + path.string());
  return out;
}

kdsel::TrainConfig model_config(const kdsel::SelectorModel& model) {
  if (model.config_json.empty()) return {};
  return kdsel::train_config_from_json(json::parse(model.config_json));
}

const kdsel::LabeledSeries& pick_series(const kdsel::Corpus& corpus, const std::string& id) {
  for (const auto& s : corpus)
    if (s.id == id) return s;
  throw kdsel::NotFound("no series with id '" + id + "'");
}

json corpus_summary(const kdsel::Corpus& corpus) {
  json rows = json::array();
  std::size_t points = 0, anomalous = 0;
  for (const auto& s : corpus) {
    const auto rec = kdsel::describe(s);
    rows.push_back({{"series_id", s.id}, {"length", s.size()}, {"anomalous_points", s.positives()},
                    {"anomalies", rec.anomaly_count}, {"dataset_name", s.dataset_name}});
    points += s.size();
    anomalous += s.positives();
  }
  return {{"series", corpus.size()}, {"points", points}, {"anomalous_points", anomalous}, {"per_series", rows}};
}

class StopFlag {
 public:
  static void install() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
  }
  static void wait() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and apply time-series anomaly detector selectors", "kdselect"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(KDSEL_VERSION));

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic mixed-anomaly corpus");
  fs::path synth_out, synth_meta;
  kdsel::SyntheticOptions synth_opts;
  synth->add_option("--out", synth_out, "Corpus CSV to write")->required();
  synth->add_option("--metadata-out", synth_meta, "Metadata sidecar JSON to write");
  synth->add_option("--series-per-family", synth_opts.series_per_family)->check(CLI::PositiveNumber);
  synth->add_option("--length", synth_opts.length)->check(CLI::Range(64, 1 << 22));
  synth->add_option("--seed", synth_opts.seed);
  synth->add_option("--strength", synth_opts.anomaly_strength)->check(CLI::Range(0.05, 10.0));

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus, optionally split it into train and test files");
  fs::path ingest_in, ingest_meta, ingest_out, ingest_train, ingest_test;
  double ingest_fraction = 0.8;
  std::uint64_t ingest_seed = 7;
  ingest->add_option("--input", ingest_in, "Corpus CSV (series_id,value,label)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--metadata", ingest_meta, "Metadata sidecar JSON")->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out, "Write the validated corpus here");
  ingest->add_option("--train-out", ingest_train, "Training split CSV");
  ingest->add_option("--test-out", ingest_test, "Test split CSV");
  ingest->add_option("--fraction", ingest_fraction, "Training fraction of series")->check(CLI::Range(0.0, 1.0));
  ingest->add_option("--seed", ingest_seed);

  // label
  auto* label = app.add_subcommand("label", "Run the detector zoo and write per-window performance labels");
  fs::path label_corpus_path, label_meta, label_config, label_out, label_traces;
  label->add_option("--corpus", label_corpus_path)->required()->check(CLI::ExistingFile);
  label->add_option("--metadata", label_meta)->check(CLI::ExistingFile);
  label->add_option("--config", label_config, "Run file (TOML)")->check(CLI::ExistingFile);
  label->add_option("--out", label_out, "Label table CSV")->required();
  label->add_option("--traces", label_traces, "Also write per-point detector scores");

  // train
  auto* trainc = app.add_subcommand("train", "Train a selector");
  fs::path train_config_path, train_corpus, train_meta, train_labels, train_out, train_events;
  std::optional<std::uint64_t> train_seed;
  std::string train_prune;
  bool train_pisl = false, train_mki = false;
  trainc->add_option("--config", train_config_path, "Run file (TOML)")->check(CLI::ExistingFile);
  trainc->add_option("--corpus", train_corpus, "Training corpus CSV (overrides the run file)")->check(CLI::ExistingFile);
  trainc->add_option("--metadata", train_meta)->check(CLI::ExistingFile);
  trainc->add_option("--labels", train_labels, "Label table from `label`; skips the detector zoo")->check(CLI::ExistingFile);
  trainc->add_option("--out", train_out, "Model file")->required();
  trainc->add_option("--events", train_events, "Event stream (NDJSON); default events.ndjson next to the model");
  trainc->add_option("--seed", train_seed);
  trainc->add_flag("--pisl", train_pisl, "Enable performance-informed soft labels");
  trainc->add_flag("--mki", train_mki, "Enable metadata knowledge integration");
  trainc->add_option("--prune", train_prune, "none, infobatch or pa")->check(CLI::IsMember({"none", "infobatch", "pa"}));

  // select
  auto* selectc = app.add_subcommand("select", "Pick a detector per series by majority vote");
  fs::path select_model, select_series;
  std::string select_id;
  std::size_t select_stride = 0;
  selectc->add_option("--model", select_model)->required()->check(CLI::ExistingFile);
  selectc->add_option("--series", select_series, "Series CSV")->required()->check(CLI::ExistingFile);
  selectc->add_option("--series-id", select_id);
  selectc->add_option("--stride", select_stride, "Window stride; default from the model's config");

  // detect
  auto* detectc = app.add_subcommand("detect", "Run a detector (given, or picked by a selector) and score it");
  fs::path detect_series, detect_model, detect_traces;
  std::string detect_id, detect_detector;
  bool detect_compare = false, detect_no_scores = false;
  detectc->add_option("--series", detect_series)->required()->check(CLI::ExistingFile);
  detectc->add_option("--series-id", detect_id);
  auto* det_opt = detectc->add_option("--detector", detect_detector, "IForest, LOF, HBOS, MP, PCA or POLY");
  auto* model_opt = detectc->add_option("--model", detect_model, "Selector model")->check(CLI::ExistingFile);
  det_opt->excludes(model_opt);
  detectc->add_flag("--compare", detect_compare, "Also run every other detector");
  detectc->add_flag("--no-scores", detect_no_scores, "Omit score traces from the JSON");
  detectc->add_option("--traces-out", detect_traces, "Write score traces as CSV");

  // eval
  auto* evalc = app.add_subcommand("eval", "Evaluate a selector on a labeled test corpus");
  fs::path eval_model, eval_corpus, eval_meta, eval_csv = "report.csv", eval_json;
  evalc->add_option("--model", eval_model)->required()->check(CLI::ExistingFile);
  evalc->add_option("--corpus", eval_corpus)->required()->check(CLI::ExistingFile);
  evalc->add_option("--metadata", eval_meta)->check(CLI::ExistingFile);
  evalc->add_option("--report", eval_csv, "CSV report path")->capture_default_str();
  evalc->add_option("--json", eval_json, "JSON report path; default next to the CSV");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  kdsel::service::ServerOptions serve_opts;
  std::string serve_dir;
  serve->add_option("--host", serve_opts.host)->capture_default_str();
  serve->add_option("--port", serve_opts.port, "0 picks a free port")->capture_default_str();
  serve->add_option("--data-dir", serve_dir, "Default: $KDSELECT_DATA_DIR, else ./kdselect-data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "kdselect: " << e.what() << "\n";
    std::cerr << "run 'kdselect --help' for usage\n";
    return 2;
  }

  try {
    if (*synth) {
      const auto corpus = kdsel::make_synthetic_corpus(synth_opts);
      kdsel::write_corpus(corpus, synth_out);
      if (!synth_meta.empty()) {
        json meta = json::object();
        for (const auto& s : corpus) meta[s.id] = {{"dataset_name", s.dataset_name}, {"domain_description", s.domain_text}};
        open_out(synth_meta) << meta.dump(2) << "\n";
      }
      std::cerr << "wrote " << corpus.size() << " series to " << synth_out.string() << "\n";
      return 0;
    }

    if (*ingest) {
      const auto corpus = read_corpus(ingest_in, ingest_meta);
      if (!ingest_out.empty()) kdsel::write_corpus(corpus, ingest_out);
      auto summary = corpus_summary(corpus);
      if (!ingest_train.empty() || !ingest_test.empty()) {
        if (ingest_train.empty() || ingest_test.empty()) throw UsageError("--train-out and --test-out go together");
        const auto [tr, te] = kdsel::split_corpus(corpus, ingest_fraction, ingest_seed);
        kdsel::write_corpus(tr, ingest_train);
        kdsel::write_corpus(te, ingest_test);
        summary["split"] = {{"train", tr.size()}, {"test", te.size()}};
      }
      std::cout << summary.dump(2) << "\n";
      return 0;
    }

    if (*label) {
      kdsel::TrainConfig config;
      fs::path meta = label_meta;
      if (!label_config.empty()) {
        const auto run = kdsel::load_run_file(label_config);
        config = run.config;
        if (meta.empty()) meta = run.inputs.metadata;
      }
      const auto corpus = read_corpus(label_corpus_path, meta);
      const auto labeled = kdsel::label_corpus(corpus, config);
      {
        auto out = open_out(label_out);
        kdsel::write_label_table(labeled.windows, out);
      }
      if (!label_traces.empty()) {
        std::vector<kdsel::AnomalyScoreTrace> traces;
        for (const auto& s : corpus) {
          auto zoo = kdsel::score_all(s, config.detector_params());
          for (auto& t : zoo.traces) traces.push_back(std::move(t));
        }
        auto out = open_out(label_traces);
        kdsel::write_traces_csv(traces, out);
      }
      std::cerr << "labeled " << labeled.supervised().size() << " of " << labeled.windows.size() << " windows ("
                << labeled.stats.skipped_short << " series shorter than the window, " << labeled.detector_skips
                << " detector skips)\n";
      return 0;
    }

    if (*trainc) {
      kdsel::RunFile run;
      if (!train_config_path.empty()) run = kdsel::load_run_file(train_config_path);
      if (!train_corpus.empty()) run.inputs.corpus = train_corpus;
      if (!train_meta.empty()) run.inputs.metadata = train_meta;
      if (!train_labels.empty()) run.inputs.labels = train_labels;
      if (run.inputs.corpus.empty()) throw UsageError("no corpus: pass --corpus or set data.corpus in the run file");
      auto& config = run.config;
      if (train_seed) config.seed = *train_seed;
      if (train_pisl) config.pisl = true;
      if (train_mki) config.mki = true;
      if (!train_prune.empty()) config.prune = kdsel::prune_mode_from_name(train_prune);
      config.validate();

      const auto corpus = read_corpus(run.inputs.corpus, run.inputs.metadata);
      kdsel::LabeledWindows labeled;
      if (!run.inputs.labels.empty()) {
        std::ifstream in(run.inputs.labels);
        if (!in) throw kdsel::Error("cannot open " + run.inputs.labels.string());
        const auto rows = kdsel::read_label_table(in);
        labeled = kdsel::apply_label_table(corpus, config, rows);
      } else {
        labeled = kdsel::label_corpus(corpus, config);
      }

      if (train_events.empty()) train_events = (train_out.has_parent_path() ? train_out.parent_path() : fs::path(".")) / "events.ndjson";
      auto events = open_out(train_events);
      struct Sink : kdsel::TrainObserver {
        std::ostream& out;
        explicit Sink(std::ostream& o) : out(o) {}
        void on_event(const kdsel::TrainEvent& e) override { out << kdsel::to_json(e).dump() << "\n"; }
      } sink(events);
      const auto result = kdsel::train(labeled.supervised(), config, &sink);
      kdsel::save_model(result.model, train_out);
      std::cerr << "trained on " << labeled.supervised().size() << " windows for " << result.epochs_completed
                << " epochs; model written to " << train_out.string() << "\n";
      if (result.status == kdsel::TrainStatus::NumericFault) {
        std::cerr << "kdselect: training aborted: " << result.message << " (last good checkpoint written)\n";
        return 3;
      }
      return 0;
    }

    if (*selectc) {
      const auto model = kdsel::load_model(select_model);
      const auto config = model_config(model);
      const std::size_t stride = select_stride > 0 ? select_stride : config.effective_stride();
      const auto corpus = kdsel::load_corpus(select_series);
      if (corpus.empty()) throw kdsel::ValidationError("series file holds no series");
      if (!select_id.empty()) {
        std::cout << kdsel::to_json(kdsel::select(model, pick_series(corpus, select_id), stride)).dump(2) << "\n";
      } else if (corpus.size() == 1) {
        std::cout << kdsel::to_json(kdsel::select(model, corpus.front(), stride)).dump(2) << "\n";
      } else {
        json all = json::array();
        for (const auto& s : corpus) all.push_back(kdsel::to_json(kdsel::select(model, s, stride)));
        std::cout << all.dump(2) << "\n";
      }
      return 0;
    }

    if (*detectc) {
      const auto corpus = kdsel::load_corpus(detect_series);
      if (corpus.empty()) throw kdsel::ValidationError("series file holds no series");
      if (detect_id.empty() && corpus.size() > 1) throw UsageError("the series file holds several series; pass --series-id");
      const auto& series = detect_id.empty() ? corpus.front() : pick_series(corpus, detect_id);
      kdsel::TrainConfig config;
      kdsel::DetectorKind detector = kdsel::DetectorKind::IForest;
      std::vector<std::size_t> votes;
      json selection = nullptr;
      if (!detect_model.empty()) {
        const auto model = kdsel::load_model(detect_model);
        config = model_config(model);
        const auto sel = kdsel::select(model, series, config.effective_stride());
        detector = sel.selected;
        votes = sel.votes;
        selection = kdsel::to_json(sel);
      } else if (!detect_detector.empty()) {
        detector = kdsel::detector_from_name(detect_detector);
      } else {
        throw UsageError("pass --detector or --model");
      }
      const auto result = kdsel::detect_and_score(series, detector, config.detector_params(), detect_compare, votes);
      auto doc = kdsel::to_json(result, !detect_no_scores);
      doc["selection"] = selection;
      if (!detect_traces.empty()) {
        std::vector<kdsel::AnomalyScoreTrace> traces;
        if (result.primary.trace) traces.push_back(*result.primary.trace);
        for (const auto& alt : result.alternatives)
          if (alt.trace && alt.detector != result.primary.detector) traces.push_back(*alt.trace);
        auto out = open_out(detect_traces);
        kdsel::write_traces_csv(traces, out);
      }
      std::cout << doc.dump(2) << "\n";
      return 0;
    }

    if (*evalc) {
      const auto model = kdsel::load_model(eval_model);
      const auto config = model_config(model);
      const auto corpus = read_corpus(eval_corpus, eval_meta);
      const auto report = kdsel::evaluate_selector(model, corpus, config);
      {
        auto out = open_out(eval_csv);
        kdsel::write_report_csv(report, out);
      }
      if (eval_json.empty()) eval_json = fs::path(eval_csv).replace_extension(".json");
      open_out(eval_json) << kdsel::to_json(report).dump(2) << "\n";
      std::cerr << "evaluated " << report.series.size() << " series (" << report.skipped_no_anomaly
                << " without anomalies skipped); selector AUC-PR " << report.selector_avg << ", oracle "
                << report.oracle_avg << "\n";
      return 0;
    }

    if (*serve) {
      if (serve_dir.empty()) {
        const char* env = std::getenv("KDSELECT_DATA_DIR");
        serve_dir = env != nullptr && *env != '\0' ? env : "kdselect-data";
      }
      serve_opts.data_dir = serve_dir;
      StopFlag::install();
      kdsel::service::Server server(serve_opts);
      const int port = server.bind();
      std::cout << "listening on http://" << serve_opts.host << ":" << port << std::endl;
      std::thread http([&] { server.run(); });
      StopFlag::wait();
      std::cerr << "shutting down\n";
      server.stop();
      http.join();
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "kdselect: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "kdselect: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
