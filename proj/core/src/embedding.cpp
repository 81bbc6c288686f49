#include "kdsel/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "kdsel/errors.hpp"

namespace kdsel {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || uc >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string sha256_hex(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

FeatureHashEmbedder::FeatureHashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
}

TextEmbedding FeatureHashEmbedder::embed(const std::string& text) const {
  TextEmbedding out;
  out.source = EmbeddingSource::FeatureHash;
  out.vector.assign(dim_, 0.0);
  for (const auto& tok : tokenize(text)) {
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : tok) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    const auto bucket = static_cast<std::size_t>(h % dim_);
    out.vector[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  double s = 0.0;
  for (double v : out.vector) s += v * v;
  if (s > 0.0) {
    const double inv = 1.0 / std::sqrt(s);
    for (auto& v : out.vector) v *= inv;
  }
  return out;
}

PrecomputedEmbedder PrecomputedEmbedder::parse(std::istream& in) {
  PrecomputedEmbedder e;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("text_sha256", 0) == 0) continue;
    std::stringstream ss(line);
    std::string key, field;
    std::getline(ss, key, ',');
    if (key.size() != 64) throw ParseError("embedding key is not a sha256 hex digest", lineno);
    if (!std::getline(ss, field, ',')) throw ParseError("missing dim", lineno);
    std::size_t dim = 0;
    std::vector<double> vec;
    try {
      dim = static_cast<std::size_t>(std::stoul(field));
      while (std::getline(ss, field, ',')) vec.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ParseError("malformed number in embedding file", lineno);
    }
    if (vec.size() != dim) throw ParseError("declared dim does not match value count", lineno);
    if (e.dim_ == 0) e.dim_ = dim;
    if (dim != e.dim_) throw ParseError("embedding dimension changes within file", lineno);
    e.table_[key] = std::move(vec);
  }
  return e;
}

PrecomputedEmbedder PrecomputedEmbedder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open embedding file " + path.string());
  return parse(in);
}

TextEmbedding PrecomputedEmbedder::embed(const std::string& text) const {
  auto it = table_.find(sha256_hex(text));
  if (it == table_.end()) throw LookupError("no precomputed embedding for text: \"" + text + "\"");
  return TextEmbedding{it->second, EmbeddingSource::PrecomputedFile};
}

}  // namespace kdsel
