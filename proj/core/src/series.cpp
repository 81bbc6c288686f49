#include "kdsel/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kdsel/errors.hpp"

namespace kdsel {

std::size_t LabeledSeries::positives() const noexcept {
  return static_cast<std::size_t>(std::count(point_labels.begin(), point_labels.end(), 1));
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty())
    throw ParseError("malformed value '" + std::string(field) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value", line);
  return v;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::unordered_set<std::string> closed;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = trim(line);
    if (lineno == 1 && view.size() >= 3 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
    if (view.empty()) continue;
    auto fields = split_fields(view);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() != 3 || fields[0] != "series_id" || fields[1] != "value" || fields[2] != "label")
        throw ParseError("expected header 'series_id,value,label'", lineno);
      continue;
    }
    if (fields.size() != 3) throw ParseError("expected 3 fields, got " + std::to_string(fields.size()), lineno);
    if (fields[0].empty()) throw ParseError("empty series_id", lineno);
    const double value = parse_double(fields[1], lineno);
    std::uint8_t label = 0;
    if (fields[2] == "0") {
      label = 0;
    } else if (fields[2] == "1") {
      label = 1;
    } else {
      throw ValidationError("line " + std::to_string(lineno) + ": label '" + std::string(fields[2]) +
                            "' outside {0,1}");
    }
    std::string id(fields[0]);
    if (corpus.empty() || corpus.back().id != id) {
      if (closed.count(id)) throw ParseError("rows of series '" + id + "' are not contiguous", lineno);
      if (!corpus.empty()) closed.insert(corpus.back().id);
      corpus.push_back(LabeledSeries{id, {}, {}, {}, {}});
    }
    corpus.back().values.push_back(value);
    corpus.back().point_labels.push_back(label);
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  out << "series_id,value,label\n";
  char buf[64];
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, s.values[i]);
      out << s.id << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << ','
          << int(s.point_labels[i]) << '\n';
    }
  }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_corpus(corpus, out);
}

std::map<std::string, SeriesMetadata> load_metadata_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open metadata sidecar " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("metadata sidecar: ") + e.what());
  }
  return parse_metadata_sidecar(doc);
}

std::map<std::string, SeriesMetadata> parse_metadata_sidecar(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("metadata sidecar must be a JSON object");
  std::map<std::string, SeriesMetadata> out;
  for (auto& [id, entry] : doc.items()) {
    SeriesMetadata meta;
    meta.dataset_name = entry.value("dataset_name", std::string{});
    meta.domain_description = entry.value("domain_description", std::string{});
    out.emplace(id, std::move(meta));
  }
  return out;
}

void apply_metadata(Corpus& corpus, const std::map<std::string, SeriesMetadata>& sidecar) {
  for (auto& s : corpus) {
    auto it = sidecar.find(s.id);
    if (it == sidecar.end()) continue;
    s.dataset_name = it->second.dataset_name;
    s.domain_text = it->second.domain_description;
  }
}

void z_normalize(std::span<double> values) {
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  // Relative threshold so that tiny float noise on a constant window still
  // counts as constant.
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (double& v : values) v = (v - mean) / sd;
}

std::vector<WindowSample> extract_windows(const LabeledSeries& series, std::size_t window,
                                          std::size_t stride, WindowStats* stats) {
  if (window < 2) throw ConfigError("window length must be >= 2");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  std::vector<WindowSample> out;
  if (series.size() < window) {
    if (stats) ++stats->skipped_short;
    return out;
  }
  out.reserve((series.size() - window) / stride + 1);
  for (std::size_t off = 0; off + window <= series.size(); off += stride) {
    WindowSample w;
    w.series_id = series.id;
    w.offset = off;
    w.values.assign(series.values.begin() + static_cast<std::ptrdiff_t>(off),
                    series.values.begin() + static_cast<std::ptrdiff_t>(off + window));
    z_normalize(w.values);
    out.push_back(std::move(w));
  }
  if (stats) stats->windows += out.size();
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> anomaly_runs(std::span<const std::uint8_t> labels) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] != 1) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < labels.size() && labels[j] == 1) ++j;
    runs.emplace_back(i, j - i);
    i = j;
  }
  return runs;
}

MetadataRecord describe(const LabeledSeries& series) {
  MetadataRecord rec;
  rec.series_length = series.size();
  for (auto [start, len] : anomaly_runs(series.point_labels)) rec.anomaly_lengths.push_back(len);
  rec.anomaly_count = rec.anomaly_lengths.size();
  rec.domain_description = series.domain_text;
  return rec;
}

std::string render_metadata(const MetadataRecord& record, const std::string& dataset_name) {
  std::ostringstream os;
  os << "This is a time series from dataset " << dataset_name << ", " << record.domain_description
     << ". The length of the series is " << record.series_length << ". There are "
     << record.anomaly_count << " anomalies in this series.";
  if (record.anomaly_count > 0) {
    os << " The lengths of the anomalies are ";
    for (std::size_t i = 0; i < record.anomaly_lengths.size(); ++i) {
      if (i) os << ", ";
      os << record.anomaly_lengths[i];
    }
    os << '.';
  }
  return os.str();
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("cannot split an empty corpus");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0,1)");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(corpus.size())));
  if (n_train == 0 || n_train == corpus.size())
    throw ConfigError("split fraction " + std::to_string(fraction) + " leaves one side empty for " +
                      std::to_string(corpus.size()) + " series");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  // Keep corpus order inside each side.
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::pair<Corpus, Corpus> out;
  for (auto i : train_idx) out.first.push_back(corpus[i]);
  for (auto i : test_idx) out.second.push_back(corpus[i]);
  return out;
}

}  // namespace kdsel
