#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lazyformer/tokenizer.hpp"

namespace lazyformer {

/// Documents of Zipf-distributed words with local repetition: each document
/// is one phrase of `phrase_length` words repeated several times, so a
/// masked word can be recovered from its copy `phrase_length` positions away.
struct SyntheticCorpusOptions {
  std::size_t documents = 2000;
  std::size_t distinct_words = 200;
  double zipf_exponent = 1.0;
  std::size_t phrase_length = 6;
  std::size_t min_repeats = 3;
  std::size_t max_repeats = 8;
  std::uint64_t seed = 7;
};

/// Words are spelled "w0", "w1", ... with w0 the most frequent.
std::vector<std::string> synthetic_documents(const SyntheticCorpusOptions& options);

/// UTF-8 text, one document per line; blank lines are skipped.
std::vector<std::string> load_documents(const std::filesystem::path& path);
void save_documents(const std::vector<std::string>& documents, const std::filesystem::path& path);

/// Concatenates the tokenized documents with [SEP] between them and slices
/// consecutive windows of `window` tokens; a short tail is dropped.
std::vector<std::vector<std::int64_t>> pack_windows(const std::vector<std::string>& documents,
                                                    const Vocab& vocab, std::size_t window);

}  // namespace lazyformer
