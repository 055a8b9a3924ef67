#include "respllm/text/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace respllm::text {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  push("[PAD]");
  push("[UNK]");
}

void Vocabulary::push(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t max_size) {
  if (corpus.empty()) throw InputError("build_vocab: empty corpus");
  if (max_size < 2) throw ConfigError("build_vocab: max_size must be at least 2");
  Vocabulary v;
  for (const std::string& doc : corpus)
    for (std::string& tok : tokenize(doc)) ++v.freq_[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(v.freq_.begin(), v.freq_.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (const auto& [tok, count] : ranked) {
    if (v.size() >= max_size) break;
    if (v.index_.count(tok) != 0) continue;
    v.push(tok);
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw InputError("Vocabulary::token: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    out += tokens_[i] + "\t" + std::to_string(i) + "\n";
  return out;
}

Vocabulary Vocabulary::parse(std::string_view data) {
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  std::istringstream in{std::string(data)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw InputError("vocabulary: malformed line '" + line + "'");
    const std::string tok = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(v.tokens_.size()))
      throw InputError("vocabulary: ids must be dense and sorted, got " + std::to_string(id));
    v.push(tok);
  }
  if (v.size() < 2 || v.tokens_[0] != "[PAD]" || v.tokens_[1] != "[UNK]")
    throw InputError("vocabulary: missing [PAD]/[UNK] specials");
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("vocabulary: cannot write " + path.string());
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("vocabulary: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Matrix embed_ids(std::span<const int> ids, const Matrix& table) {
  Matrix z(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw InputError("embed: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(table.rows()) + " rows");
    z.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  }
  return z;
}

EmbeddingSequence tokenize_embed(std::string_view text, const Vocabulary& vocab,
                                 const Parameter& table) {
  if (static_cast<std::size_t>(table.value.rows()) < vocab.size())
    throw DimensionError("tokenize_embed: table has " + std::to_string(table.value.rows()) +
                         " rows for a vocabulary of " + std::to_string(vocab.size()));
  EmbeddingSequence seq;
  seq.ids = vocab.encode(text);
  seq.z = embed_ids(seq.ids, table.value);
  return seq;
}

}  // namespace respllm::text
