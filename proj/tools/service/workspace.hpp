#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "kdsel/selector.hpp"
#include "kdsel/series.hpp"
#include "registry.hpp"

namespace kdsel::service {

// On-disk layout under the data directory:
//   corpora/<id>.csv, corpora/<id>.meta.json
//   selectors/index.json, selectors/<selector_id>.kdsl
//   reports/<report_id>.json
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root);

  struct StoredCorpus {
    std::string corpus_id;
    std::shared_ptr<const Corpus> corpus;
    bool created = false;
  };

  // Content-addressed: uploading the same bytes twice yields the same id.
  StoredCorpus store_corpus(const std::string& csv, const nlohmann::json& metadata = nlohmann::json::object());
  std::shared_ptr<const Corpus> corpus(const std::string& corpus_id);  // throws NotFound
  const LabeledSeries& series(const Corpus& corpus, const std::string& series_id) const;

  void store_report(const std::string& report_id, const nlohmann::json& report);
  nlohmann::json report(const std::string& report_id) const;  // throws NotFound

  std::filesystem::path model_path(const std::string& selector_id) const;
  // Immutable snapshot, cached until the selector is removed.
  std::shared_ptr<const SelectorModel> model(const std::string& selector_id);
  void forget_model(const std::string& selector_id);

  Registry& registry() { return registry_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  Registry registry_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Corpus>> corpora_;
  std::map<std::string, std::shared_ptr<const SelectorModel>> models_;
};

// Identifiers used as file names: letters, digits, '-', '_', '.'.
bool valid_identifier(const std::string& id);

}  // namespace kdsel::service
