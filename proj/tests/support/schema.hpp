#pragma once

// Field/type checks for the service's JSON payloads. Returns a list of
// problems so callers can report all of them at once.

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kdsel::testing {

enum class JsonType { String, Number, Integer, Boolean, Object, Array, Nullable };

inline bool has_type(const nlohmann::json& v, JsonType t) {
  switch (t) {
    case JsonType::String: return v.is_string();
    case JsonType::Number: return v.is_number();
    case JsonType::Integer: return v.is_number_integer();
    case JsonType::Boolean: return v.is_boolean();
    case JsonType::Object: return v.is_object();
    case JsonType::Array: return v.is_array();
    case JsonType::Nullable: return true;
  }
  return false;
}

using FieldSpec = std::initializer_list<std::pair<const char*, JsonType>>;

inline std::vector<std::string> schema_errors(const nlohmann::json& doc, FieldSpec fields, const std::string& where) {
  std::vector<std::string> out;
  if (!doc.is_object()) return {where + ": not an object"};
  for (const auto& [name, type] : fields) {
    if (!doc.contains(name))
      out.push_back(where + ": missing '" + name + "'");
    else if (!has_type(doc.at(name), type))
      out.push_back(where + ": '" + name + "' has type " + doc.at(name).type_name());
  }
  return out;
}

// Schemas of the main response bodies.
inline std::vector<std::string> check_corpus_response(const nlohmann::json& j) {
  return schema_errors(j,
                       {{"corpus_id", JsonType::String},
                        {"series", JsonType::Integer},
                        {"points", JsonType::Integer},
                        {"anomalous_points", JsonType::Integer},
                        {"series_ids", JsonType::Array}},
                       "corpus");
}

inline std::vector<std::string> check_job_status(const nlohmann::json& j) {
  return schema_errors(j,
                       {{"job_id", JsonType::String},
                        {"state", JsonType::String},
                        {"corpus_id", JsonType::String},
                        {"created_at", JsonType::String},
                        {"progress", JsonType::Object},
                        {"events", JsonType::Integer},
                        {"last_event", JsonType::Nullable}},
                       "job");
}

inline std::vector<std::string> check_train_event(const nlohmann::json& j) {
  auto out = schema_errors(j, {{"type", JsonType::String}, {"seq", JsonType::Integer}}, "event");
  if (!out.empty()) return out;
  const auto type = j.at("type").get<std::string>();
  if (type == "batch" || type == "epoch") {
    auto more = schema_errors(j,
                              {{"epoch", JsonType::Integer},
                               {"batch", JsonType::Integer},
                               {"loss", JsonType::Object},
                               {"wall_ms", JsonType::Number},
                               {"samples_per_sec", JsonType::Number}},
                              "event");
    out.insert(out.end(), more.begin(), more.end());
    if (j.contains("loss") && j.at("loss").is_object()) {
      more = schema_errors(j.at("loss"),
                           {{"ce", JsonType::Number},
                            {"pisl", JsonType::Number},
                            {"mki", JsonType::Number},
                            {"total", JsonType::Number}},
                           "event.loss");
      out.insert(out.end(), more.begin(), more.end());
    }
  }
  return out;
}

inline std::vector<std::string> check_selector_record(const nlohmann::json& j) {
  return schema_errors(j,
                       {{"selector_id", JsonType::String},
                        {"created_at", JsonType::String},
                        {"config", JsonType::Object},
                        {"metrics", JsonType::Object}},
                       "selector");
}

inline std::vector<std::string> check_selection(const nlohmann::json& j) {
  return schema_errors(j,
                       {{"series_id", JsonType::String},
                        {"selected", JsonType::String},
                        {"votes", JsonType::Object},
                        {"predictions", JsonType::Array},
                        {"fallback", JsonType::Boolean}},
                       "selection");
}

inline std::vector<std::string> check_detection(const nlohmann::json& j) {
  auto out = schema_errors(j,
                           {{"series_id", JsonType::String},
                            {"requested", JsonType::String},
                            {"fallback_used", JsonType::Boolean},
                            {"result", JsonType::Object},
                            {"alternatives", JsonType::Array}},
                           "detection");
  if (out.empty()) {
    auto more = schema_errors(j.at("result"), {{"detector", JsonType::String}, {"auc_pr", JsonType::Nullable}},
                              "detection.result");
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

inline std::vector<std::string> check_report(const nlohmann::json& j) {
  return schema_errors(j,
                       {{"series_evaluated", JsonType::Integer},
                        {"average_auc_pr", JsonType::Object},
                        {"selection_accuracy", JsonType::Number},
                        {"series", JsonType::Array}},
                       "report");
}

}  // namespace kdsel::testing
