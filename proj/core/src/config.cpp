#include "kdsel/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "kdsel/errors.hpp"

namespace kdsel {

DetectorParams TrainConfig::detector_params() const {
  DetectorParams p = detectors;
  if (detectors_mp_auto) p.mp_subsequence = std::max<std::size_t>(2, window / 2);
  p.seed = seed;
  return p;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (window < 2) fail("window must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0,1)");
  if (!(t_soft > 0.0)) fail("t_soft must be > 0");
  if (alpha < 0.0 || alpha > 1.0) fail("alpha must lie in [0,1]");
  if (lambda < 0.0) fail("lambda must be >= 0");
  if (!(tau_nce > 0.0)) fail("tau_nce must be > 0");
  if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) fail("prune_ratio must lie in [0,1)");
  if (lsh_bits < 1 || lsh_bits > 64) fail("lsh_bits must lie in [1,64]");
  if (bins < 1) fail("bins must be >= 1");
  if (anneal_fraction < 0.0 || anneal_fraction > 1.0) fail("anneal_fraction must lie in [0,1]");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must lie in [0,1)");
  if (mki && proj_dim == 0) fail("proj_dim must be >= 1 when mki is enabled");
  if (mki && embedder == "feature-hash" && text_dim == 0) fail("text_dim must be >= 1 for the feature-hash embedder");
  if (embedder != "feature-hash" && embedder != "precomputed") fail("embedder must be feature-hash or precomputed");
  if (embedder == "precomputed" && embedding_file.empty()) fail("embedder 'precomputed' needs embedding_file");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json d = {
      {"window", c.detectors.window},
      {"iforest_trees", c.detectors.iforest_trees},
      {"iforest_subsample", c.detectors.iforest_subsample},
      {"lof_k", c.detectors.lof_k},
      {"hbos_bins", c.detectors.hbos_bins},
      {"hbos_window", c.detectors.hbos_window},
      {"pca_variance", c.detectors.pca_variance},
      {"poly_degree", c.detectors.poly_degree},
      {"poly_window", c.detectors.poly_window},
      {"mp_subsequence", c.detectors_mp_auto ? 0 : c.detectors.mp_subsequence},
  };
  return nlohmann::json{
      {"learning_rate", c.learning_rate},
      {"clip_bound", c.clip_bound},
      {"momentum", c.momentum},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"window", c.window},
      {"stride", c.stride},
      {"train_fraction", c.train_fraction},
      {"encoder", std::string(encoder_name(c.encoder))},
      {"pisl", c.pisl},
      {"t_soft", c.t_soft},
      {"alpha", c.alpha},
      {"mki", c.mki},
      {"lambda", c.lambda},
      {"tau_nce", c.tau_nce},
      {"proj_dim", c.proj_dim},
      {"text_dim", c.text_dim},
      {"embedder", c.embedder},
      {"embedding_file", c.embedding_file},
      {"prune", prune_mode_name(c.prune)},
      {"prune_ratio", c.prune_ratio},
      {"lsh_bits", c.lsh_bits},
      {"bins", c.bins},
      {"anneal_fraction", c.anneal_fraction},
      {"detectors", d},
  };
}

namespace {

template <typename T>
void read_number(const nlohmann::json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  const auto& v = doc.at(key);
  if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (v.is_number_float() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  out = v.get<T>();
}

void read_bool(const nlohmann::json& doc, const char* key, bool& out) {
  if (!doc.contains(key)) return;
  if (!doc.at(key).is_boolean()) throw ConfigError(std::string("config key '") + key + "' must be a boolean");
  out = doc.at(key).get<bool>();
}

void read_string(const nlohmann::json& doc, const char* key, std::string& out) {
  if (!doc.contains(key)) return;
  if (!doc.at(key).is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
  out = doc.at(key).get<std::string>();
}

void reject_unknown(const nlohmann::json& doc, const std::set<std::string>& known, const std::string& where) {
  for (auto& [k, v] : doc.items())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'" + where);
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be an object");
  static const std::set<std::string> kKnown = {
      "learning_rate", "clip_bound", "momentum",  "batch_size", "epochs",         "seed",      "window",
      "stride",        "train_fraction", "encoder", "pisl",     "t_soft",         "alpha",     "mki",
      "lambda",        "tau_nce",    "proj_dim",  "text_dim",   "embedder",       "embedding_file",
      "prune",         "prune_ratio", "lsh_bits", "bins",       "anneal_fraction", "detectors"};
  reject_unknown(doc, kKnown, "");
  TrainConfig c;
  read_number(doc, "learning_rate", c.learning_rate);
  read_number(doc, "clip_bound", c.clip_bound);
  read_number(doc, "momentum", c.momentum);
  read_number(doc, "batch_size", c.batch_size);
  read_number(doc, "epochs", c.epochs);
  read_number(doc, "seed", c.seed);
  read_number(doc, "window", c.window);
  read_number(doc, "stride", c.stride);
  read_number(doc, "train_fraction", c.train_fraction);
  if (doc.contains("encoder")) {
    std::string enc;
    read_string(doc, "encoder", enc);
    c.encoder = encoder_from_name(enc);
  }
  read_bool(doc, "pisl", c.pisl);
  read_number(doc, "t_soft", c.t_soft);
  read_number(doc, "alpha", c.alpha);
  read_bool(doc, "mki", c.mki);
  read_number(doc, "lambda", c.lambda);
  read_number(doc, "tau_nce", c.tau_nce);
  read_number(doc, "proj_dim", c.proj_dim);
  read_number(doc, "text_dim", c.text_dim);
  read_string(doc, "embedder", c.embedder);
  read_string(doc, "embedding_file", c.embedding_file);
  if (doc.contains("prune")) {
    std::string mode;
    read_string(doc, "prune", mode);
    c.prune = prune_mode_from_name(mode);
  }
  read_number(doc, "prune_ratio", c.prune_ratio);
  read_number(doc, "lsh_bits", c.lsh_bits);
  read_number(doc, "bins", c.bins);
  read_number(doc, "anneal_fraction", c.anneal_fraction);
  if (doc.contains("detectors")) {
    const auto& d = doc.at("detectors");
    if (!d.is_object()) throw ConfigError("'detectors' must be a table");
    reject_unknown(d,
                   {"window", "iforest_trees", "iforest_subsample", "lof_k", "hbos_bins", "hbos_window",
                    "pca_variance", "poly_degree", "poly_window", "mp_subsequence"},
                   " in [detectors]");
    auto& p = c.detectors;
    read_number(d, "window", p.window);
    read_number(d, "iforest_trees", p.iforest_trees);
    read_number(d, "iforest_subsample", p.iforest_subsample);
    read_number(d, "lof_k", p.lof_k);
    read_number(d, "hbos_bins", p.hbos_bins);
    read_number(d, "hbos_window", p.hbos_window);
    read_number(d, "pca_variance", p.pca_variance);
    read_number(d, "poly_degree", p.poly_degree);
    read_number(d, "poly_window", p.poly_window);
    std::size_t mp = 0;
    read_number(d, "mp_subsequence", mp);
    c.detectors_mp_auto = mp == 0;
    if (mp != 0) p.mp_subsequence = mp;
  }
  c.validate();
  return c;
}

// --- TOML subset ------------------------------------------------------------

namespace {

std::string strip(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Drops a trailing comment that is not inside a string.
std::string drop_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_value(const std::string& raw, std::size_t lineno) {
  if (raw.empty()) throw ParseError("missing value", lineno);
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') throw ParseError("unterminated string", lineno);
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      char c = raw[i];
      if (c == '\\' && i + 2 < raw.size()) {
        const char e = raw[++i];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: throw ParseError(std::string("unsupported escape \\") + e, lineno);
        }
      } else {
        out.push_back(c);
      }
    }
    return out;
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  std::string num;
  for (char c : raw)
    if (c != '_') num.push_back(c);
  const bool looks_float = num.find_first_of(".eE") != std::string::npos || num == "inf" || num == "nan";
  if (!looks_float) {
    std::int64_t v = 0;
    const char* first = num.data() + (num.front() == '+' ? 1 : 0);
    auto [ptr, ec] = std::from_chars(first, num.data() + num.size(), v);
    if (ec == std::errc{} && ptr == num.data() + num.size()) return v;
  }
  double d = 0.0;
  const char* first = num.data() + (num.front() == '+' ? 1 : 0);
  auto [ptr, ec] = std::from_chars(first, num.data() + num.size(), d);
  if (ec != std::errc{} || ptr != num.data() + num.size()) throw ParseError("cannot parse value '" + raw + "'", lineno);
  return d;
}

nlohmann::json toml_to_json(const TomlValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  table[""];
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(drop_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("malformed table header", lineno);
      section = strip(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError("empty table name", lineno);
      if (table.count(section) && !table[section].empty()) throw ParseError("table [" + section + "] defined twice", lineno);
      table[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
    std::string key = strip(line.substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) throw ParseError("empty key", lineno);
    auto& tbl = table[section];
    if (tbl.count(key)) throw ParseError("duplicate key '" + key + "'", lineno);
    tbl.emplace(key, parse_value(strip(line.substr(eq + 1)), lineno));
  }
  return table;
}

namespace {

TrainConfig config_from_table(const TomlTable& table) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [section, entries] : table) {
    nlohmann::json obj = nlohmann::json::object();
    for (const auto& [k, v] : entries) obj[k] = toml_to_json(v);
    if (section.empty()) {
      for (auto& [k, v] : obj.items()) doc[k] = v;
    } else {
      doc[section] = obj;
    }
  }
  return train_config_from_json(doc);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TrainConfig train_config_from_toml(const std::string& text) { return config_from_table(parse_toml(text)); }

RunFile load_run_file(const std::filesystem::path& path) {
  auto table = parse_toml(read_text(path));
  RunFile run;
  if (auto it = table.find("data"); it != table.end()) {
    const auto base = path.parent_path();
    for (const auto& [key, value] : it->second) {
      const auto* text = std::get_if<std::string>(&value);
      if (text == nullptr) throw ConfigError("data." + key + " must be a string path");
      const std::filesystem::path p = *text;
      const auto resolved = p.is_absolute() || base.empty() ? p : base / p;
      if (key == "corpus") {
        run.inputs.corpus = resolved;
      } else if (key == "metadata") {
        run.inputs.metadata = resolved;
      } else if (key == "labels") {
        run.inputs.labels = resolved;
      } else {
        throw ConfigError("unknown key data." + key);
      }
    }
    table.erase(it);
  }
  run.config = config_from_table(table);
  apply_env_overrides(run.config);
  return run;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  auto config = train_config_from_toml(read_text(path));
  apply_env_overrides(config);
  return config;
}

std::string to_toml(const TrainConfig& config) {
  const auto doc = to_json(config);
  std::ostringstream os;
  auto emit = [&](const std::string& key, const nlohmann::json& v) {
    os << key << " = " << v.dump() << '\n';
  };
  for (auto& [k, v] : doc.items())
    if (!v.is_object()) emit(k, v);
  os << "\n[detectors]\n";
  for (auto& [k, v] : doc.at("detectors").items()) emit(k, v);
  return os.str();
}

void apply_env_overrides(TrainConfig& config) {
  if (const char* env = std::getenv("KDSELECT_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t seed = 0;
    const std::string_view s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("KDSELECT_SEED is not an unsigned integer");
    config.seed = seed;
  }
}

}  // namespace kdsel
