#include "workspace.hpp"

#include <fstream>
#include <sstream>

#include "kdsel/embedding.hpp"
#include "kdsel/errors.hpp"

namespace kdsel::service {

namespace fs = std::filesystem;

bool valid_identifier(const std::string& id) {
  if (id.empty() || id.size() > 128 || id.front() == '.') return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

namespace {

void require_identifier(const std::string& id, const char* what) {
  if (!valid_identifier(id)) throw ValidationError(std::string("invalid ") + what + " '" + id + "'");
}

}  // namespace

Workspace::Workspace(fs::path root) : root_(std::move(root)), registry_(root_ / "selectors" / "index.json") {
  fs::create_directories(root_ / "corpora");
  fs::create_directories(root_ / "selectors");
  fs::create_directories(root_ / "reports");
}

Workspace::StoredCorpus Workspace::store_corpus(const std::string& csv, const nlohmann::json& metadata) {
  std::istringstream in(csv);
  auto parsed = parse_corpus(in);
  if (parsed.empty()) throw ValidationError("corpus has no series");
  apply_metadata(parsed, parse_metadata_sidecar(metadata));
  const std::string meta_text = metadata.dump();
  const std::string id = "corpus-" + sha256_hex(csv + '\n' + meta_text).substr(0, 16);

  std::lock_guard lock(mu_);
  StoredCorpus out;
  out.corpus_id = id;
  const auto csv_path = root_ / "corpora" / (id + ".csv");
  if (!fs::exists(csv_path)) {
    write_file_atomic(root_ / "corpora" / (id + ".meta.json"), meta_text);
    write_file_atomic(csv_path, csv);
    out.created = true;
  }
  auto ptr = std::make_shared<const Corpus>(std::move(parsed));
  corpora_[id] = ptr;
  out.corpus = ptr;
  return out;
}

std::shared_ptr<const Corpus> Workspace::corpus(const std::string& corpus_id) {
  require_identifier(corpus_id, "corpus id");
  std::lock_guard lock(mu_);
  if (auto it = corpora_.find(corpus_id); it != corpora_.end()) return it->second;
  const auto csv_path = root_ / "corpora" / (corpus_id + ".csv");
  if (!fs::exists(csv_path)) throw NotFound("no corpus with id '" + corpus_id + "'");
  auto loaded = load_corpus(csv_path);
  const auto meta_path = root_ / "corpora" / (corpus_id + ".meta.json");
  if (fs::exists(meta_path)) apply_metadata(loaded, load_metadata_sidecar(meta_path));
  auto ptr = std::make_shared<const Corpus>(std::move(loaded));
  corpora_[corpus_id] = ptr;
  return ptr;
}

const LabeledSeries& Workspace::series(const Corpus& corpus, const std::string& series_id) const {
  for (const auto& s : corpus)
    if (s.id == series_id) return s;
  throw NotFound("no series with id '" + series_id + "'");
}

void Workspace::store_report(const std::string& report_id, const nlohmann::json& report) {
  require_identifier(report_id, "report id");
  write_file_atomic(root_ / "reports" / (report_id + ".json"), report.dump(2) + "\n");
}

nlohmann::json Workspace::report(const std::string& report_id) const {
  require_identifier(report_id, "report id");
  const auto path = root_ / "reports" / (report_id + ".json");
  std::ifstream in(path);
  if (!in) throw NotFound("no report with id '" + report_id + "'");
  return nlohmann::json::parse(in);
}

fs::path Workspace::model_path(const std::string& selector_id) const {
  require_identifier(selector_id, "selector id");
  return root_ / "selectors" / (selector_id + ".kdsl");
}

std::shared_ptr<const SelectorModel> Workspace::model(const std::string& selector_id) {
  const auto record = registry_.get(selector_id);
  std::lock_guard lock(mu_);
  if (auto it = models_.find(selector_id); it != models_.end()) return it->second;
  auto ptr = std::make_shared<const SelectorModel>(load_model(fs::path(record.model_path)));
  models_[selector_id] = ptr;
  return ptr;
}

void Workspace::forget_model(const std::string& selector_id) {
  std::lock_guard lock(mu_);
  models_.erase(selector_id);
}

}  // namespace kdsel::service
