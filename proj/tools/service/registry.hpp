#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kdsel::service {

struct SelectorRecord {
  std::string selector_id;
  std::string created_at;  // UTC, ISO 8601 with milliseconds
  std::uint64_t sequence = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  std::string model_path;

  friend bool operator==(const SelectorRecord&, const SelectorRecord&) = default;
};

nlohmann::json to_json(const SelectorRecord& record);
SelectorRecord record_from_json(const nlohmann::json& doc);

std::string utc_timestamp();

// Selector records in one JSON index file. Every mutation rewrites the index
// through a temporary file and a rename, so a crash leaves either the old or
// the new index on disk.
class Registry {
 public:
  explicit Registry(std::filesystem::path index_path);

  // Inserts or replaces. A new record gets the next sequence number and, if
  // empty, a creation timestamp.
  SelectorRecord put(SelectorRecord record);
  SelectorRecord get(const std::string& selector_id) const;  // throws NotFound
  std::optional<SelectorRecord> find(const std::string& selector_id) const;
  std::vector<SelectorRecord> list() const;  // creation order
  // Removes the record and its model file. Throws NotFound.
  void remove(const std::string& selector_id);
  void flush() const;

  const std::filesystem::path& index_path() const { return path_; }

 private:
  void save_locked() const;

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<SelectorRecord> records_;
  std::uint64_t next_sequence_ = 1;
};

// Writes `content` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace kdsel::service
