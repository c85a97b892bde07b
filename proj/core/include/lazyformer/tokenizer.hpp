#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lazyformer {

/// Token list with the four specials at ids 0..3.
class Vocab {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kMask = 1;
  static constexpr std::int64_t kUnk = 2;
  static constexpr std::int64_t kSep = 3;
  static constexpr std::int64_t kNumSpecial = 4;
  static constexpr std::array<std::string_view, 4> kSpecialTokens = {"[PAD]", "[MASK]", "[UNK]",
                                                                     "[SEP]"};

  /// Specials only.
  Vocab();
  /// Throws ConfigError unless the first four tokens are the specials in
  /// order and all tokens are distinct and non-empty.
  explicit Vocab(std::vector<std::string> tokens);

  /// One token per line, line number = id.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Specials followed by the `max_size - 4` most frequent words of `documents`
  /// (ties broken lexicographically).
  static Vocab from_documents(const std::vector<std::string>& documents, std::size_t max_size);

  std::size_t size() const noexcept { return tokens_.size(); }
  /// Id of `token`, or kUnk.
  std::int64_t id(std::string_view token) const;
  const std::string& token(std::int64_t id) const;
  static bool is_special(std::int64_t id) noexcept { return id >= 0 && id < kNumSpecial; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> index_;
};

/// Lower-cases ASCII, splits on whitespace and emits each ASCII punctuation
/// character as its own word.
std::vector<std::string> split_words(std::string_view text);

std::vector<std::int64_t> tokenize(std::string_view text, const Vocab& vocab);

/// Space-joined tokens.
std::string detokenize(const std::vector<std::int64_t>& ids, const Vocab& vocab);

}  // namespace lazyformer
