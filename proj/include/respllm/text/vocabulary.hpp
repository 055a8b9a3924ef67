#pragma once

#include "respllm/core/parameter.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace respllm::text {

// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  // Keeps the max_size - 2 most frequent tokens, ties broken lexicographically.
  static Vocabulary build(std::span<const std::string> corpus, std::size_t max_size);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  std::vector<int> encode(std::string_view text) const;
  // Corpus counts of the tokens seen while building (empty after parse).
  const std::map<std::string, std::size_t>& frequencies() const { return freq_; }

  // "token<TAB>id" lines sorted by id.
  std::string serialize() const;
  static Vocabulary parse(std::string_view data);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::map<std::string, std::size_t> freq_;
};

struct EmbeddingSequence {
  std::vector<int> ids;
  Matrix z;  // [ids.size() x S]
  Eigen::Index length() const { return static_cast<Eigen::Index>(ids.size()); }
};

// Token ids plus their rows of the shared [V x S] embedding table.
EmbeddingSequence tokenize_embed(std::string_view text, const Vocabulary& vocab,
                                 const Parameter& table);
Matrix embed_ids(std::span<const int> ids, const Matrix& table);

}  // namespace respllm::text
