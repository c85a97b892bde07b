#include "lazyformer/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "lazyformer/error.hpp"

namespace lazyformer {

Vocab::Vocab() : Vocab(std::vector<std::string>(kSpecialTokens.begin(), kSpecialTokens.end())) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecialTokens.size()) {
    throw ConfigError("vocabulary must start with the four special tokens");
  }
  for (std::size_t i = 0; i < kSpecialTokens.size(); ++i) {
    if (tokens_[i] != kSpecialTokens[i]) {
      throw ConfigError("vocabulary line " + std::to_string(i + 1) + " must be " +
                        std::string(kSpecialTokens[i]) + ", found '" + tokens_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw ConfigError("empty token at vocabulary id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<std::int64_t>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::from_documents(const std::vector<std::string>& documents, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : documents) {
    for (auto& w : split_words(doc)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
  for (const auto& [word, count] : ranked) {
    if (tokens.size() >= max_size) break;
    if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), word) != kSpecialTokens.end()) {
      continue;
    }
    tokens.push_back(word);
  }
  return Vocab(std::move(tokens));
}

std::int64_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      words.emplace_back(1, raw);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : raw);
    }
  }
  flush();
  return words;
}

std::vector<std::int64_t> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<std::int64_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const std::vector<std::int64_t>& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace lazyformer
