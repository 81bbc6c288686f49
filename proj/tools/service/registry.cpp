#include "registry.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "kdsel/errors.hpp"

namespace kdsel::service {

nlohmann::json to_json(const SelectorRecord& r) {
  return {{"selector_id", r.selector_id}, {"created_at", r.created_at}, {"sequence", r.sequence},
          {"config", r.config},           {"metrics", r.metrics},       {"model_path", r.model_path}};
}

SelectorRecord record_from_json(const nlohmann::json& doc) {
  SelectorRecord r;
  try {
    r.selector_id = doc.at("selector_id").get<std::string>();
    r.created_at = doc.value("created_at", "");
    r.sequence = doc.value("sequence", std::uint64_t{0});
    r.config = doc.value("config", nlohmann::json::object());
    r.metrics = doc.value("metrics", nlohmann::json::object());
    r.model_path = doc.value("model_path", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad selector record: ") + e.what());
  }
  return r;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Registry::Registry(std::filesystem::path index_path) : path_(std::move(index_path)) {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("registry index " + path_.string() + " is not valid JSON: " + e.what());
  }
  for (const auto& item : doc.value("selectors", nlohmann::json::array())) records_.push_back(record_from_json(item));
  next_sequence_ = doc.value("next_sequence", std::uint64_t{1});
  for (const auto& r : records_) next_sequence_ = std::max(next_sequence_, r.sequence + 1);
}

SelectorRecord Registry::put(SelectorRecord record) {
  if (record.selector_id.empty()) throw ValidationError("selector_id must not be empty");
  std::lock_guard lock(mu_);
  auto it = std::find_if(records_.begin(), records_.end(),
                         [&](const SelectorRecord& r) { return r.selector_id == record.selector_id; });
  if (it != records_.end()) {
    record.sequence = it->sequence;
    if (record.created_at.empty()) record.created_at = it->created_at;
    *it = record;
  } else {
    record.sequence = next_sequence_++;
    if (record.created_at.empty()) record.created_at = utc_timestamp();
    records_.push_back(record);
  }
  save_locked();
  return record;
}

std::optional<SelectorRecord> Registry::find(const std::string& selector_id) const {
  std::lock_guard lock(mu_);
  for (const auto& r : records_)
    if (r.selector_id == selector_id) return r;
  return std::nullopt;
}

SelectorRecord Registry::get(const std::string& selector_id) const {
  auto r = find(selector_id);
  if (!r) throw NotFound("no selector with id '" + selector_id + "'");
  return *r;
}

std::vector<SelectorRecord> Registry::list() const {
  std::lock_guard lock(mu_);
  auto out = records_;
  std::stable_sort(out.begin(), out.end(), [](const SelectorRecord& a, const SelectorRecord& b) {
    return a.sequence < b.sequence;
  });
  return out;
}

void Registry::remove(const std::string& selector_id) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(records_.begin(), records_.end(),
                         [&](const SelectorRecord& r) { return r.selector_id == selector_id; });
  if (it == records_.end()) throw NotFound("no selector with id '" + selector_id + "'");
  const std::filesystem::path model = it->model_path;
  records_.erase(it);
  save_locked();
  std::error_code ec;
  if (!model.empty()) std::filesystem::remove(model, ec);
}

void Registry::flush() const {
  std::lock_guard lock(mu_);
  save_locked();
}

void Registry::save_locked() const {
  nlohmann::json doc = {{"next_sequence", next_sequence_}, {"selectors", nlohmann::json::array()}};
  for (const auto& r : records_) doc["selectors"].push_back(to_json(r));
  write_file_atomic(path_, doc.dump(2) + "\n");
}

}  // namespace kdsel::service
