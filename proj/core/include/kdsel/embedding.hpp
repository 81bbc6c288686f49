#pragma once

// Text embedders for metadata descriptions.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kdsel {

enum class EmbeddingSource { FeatureHash, PrecomputedFile };

struct TextEmbedding {
  std::vector<double> vector;
  EmbeddingSource source = EmbeddingSource::FeatureHash;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual TextEmbedding embed(const std::string& text) const = 0;
  virtual std::size_t dim() const = 0;
};

// Bag of lowercase alphanumeric tokens hashed into `dim` signed buckets, then
// L2-normalized. Empty text maps to the zero vector.
class FeatureHashEmbedder final : public TextEmbedder {
 public:
  explicit FeatureHashEmbedder(std::size_t dim);
  TextEmbedding embed(const std::string& text) const override;
  std::size_t dim() const override { return dim_; }

 private:
  std::size_t dim_;
};

// Exact-match lookup keyed by the SHA-256 of the text, from a CSV file
// `text_sha256,dim,v_0,...,v_{d-1}`.
class PrecomputedEmbedder final : public TextEmbedder {
 public:
  static PrecomputedEmbedder load(const std::filesystem::path& path);
  static PrecomputedEmbedder parse(std::istream& in);
  TextEmbedding embed(const std::string& text) const override;
  std::size_t dim() const override { return dim_; }
  std::size_t size() const { return table_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

std::vector<std::string> tokenize(std::string_view text);
std::string sha256_hex(std::string_view text);

}  // namespace kdsel
