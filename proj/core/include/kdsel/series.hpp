#pragma once

// Corpus ingestion, windowing, splitting and metadata text.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kdsel {

struct LabeledSeries {
  std::string id;
  std::vector<double> values;
  std::vector<std::uint8_t> point_labels;  // 1 = anomalous point
  std::string dataset_name;
  std::string domain_text;

  std::size_t size() const noexcept { return values.size(); }
  std::size_t positives() const noexcept;
};

using Corpus = std::vector<LabeledSeries>;

// A fixed-length, z-normalized subsequence of a series. The performance
// vector and hard label are filled by label_windows(); `supervised` is false
// for windows whose span holds no anomalous point.
struct WindowSample {
  std::string series_id;
  std::size_t offset = 0;
  std::vector<double> values;
  int hard_label = -1;
  std::vector<double> performance;
  std::string metadata_text;
  bool supervised = false;

  std::string window_id() const { return series_id + "#" + std::to_string(offset); }
};

struct MetadataRecord {
  std::size_t series_length = 0;
  std::size_t anomaly_count = 0;
  std::vector<std::size_t> anomaly_lengths;
  std::string domain_description;
};

struct SeriesMetadata {
  std::string dataset_name;
  std::string domain_description;
};

// Reads the corpus CSV (`series_id,value,label`, rows grouped by series in
// time order). Values are kept exactly as parsed.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in);
void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Optional JSON sidecar: {series_id: {dataset_name, domain_description}}.
std::map<std::string, SeriesMetadata> load_metadata_sidecar(const std::filesystem::path& path);
std::map<std::string, SeriesMetadata> parse_metadata_sidecar(const nlohmann::json& doc);
void apply_metadata(Corpus& corpus, const std::map<std::string, SeriesMetadata>& sidecar);

// Counters shared across calls; extract_windows() bumps `skipped_short`
// for each series shorter than the window.
struct WindowStats {
  std::size_t skipped_short = 0;
  std::size_t windows = 0;
};

std::vector<WindowSample> extract_windows(const LabeledSeries& series, std::size_t window,
                                          std::size_t stride, WindowStats* stats = nullptr);

// z-normalizes in place; constant input becomes all zeros.
void z_normalize(std::span<double> values);

MetadataRecord describe(const LabeledSeries& series);
std::string render_metadata(const MetadataRecord& record, const std::string& dataset_name);

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction, std::uint64_t seed);

// Maximal runs of 1s as (start, length) pairs.
std::vector<std::pair<std::size_t, std::size_t>> anomaly_runs(std::span<const std::uint8_t> labels);

}  // namespace kdsel
