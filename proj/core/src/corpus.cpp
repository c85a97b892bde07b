#include "lazyformer/corpus.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "lazyformer/error.hpp"
#include "lazyformer/random.hpp"

namespace lazyformer {

std::vector<std::string> synthetic_documents(const SyntheticCorpusOptions& o) {
  if (o.distinct_words == 0 || o.phrase_length == 0 || o.min_repeats == 0 ||
      o.max_repeats < o.min_repeats) {
    throw ConfigError("invalid synthetic corpus options");
  }
  std::vector<double> weights(o.distinct_words);
  for (std::size_t r = 0; r < weights.size(); ++r) {
    weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), o.zipf_exponent);
  }
  std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());
  RandomState rng(o.seed);

  std::vector<std::string> docs;
  docs.reserve(o.documents);
  for (std::size_t d = 0; d < o.documents; ++d) {
    std::vector<std::string> phrase;
    for (std::size_t i = 0; i < o.phrase_length; ++i) {
      phrase.push_back("w" + std::to_string(zipf(rng.engine())));
    }
    const auto repeats = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(o.min_repeats), static_cast<std::int64_t>(o.max_repeats)));
    std::string doc;
    for (std::size_t r = 0; r < repeats; ++r) {
      for (const auto& w : phrase) {
        if (!doc.empty()) doc.push_back(' ');
        doc += w;
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<std::string> load_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus " + path.string());
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    docs.push_back(line);
  }
  return docs;
}

void save_documents(const std::vector<std::string>& documents, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write corpus " + path.string());
  for (const auto& d : documents) out << d << '\n';
}

std::vector<std::vector<std::int64_t>> pack_windows(const std::vector<std::string>& documents,
                                                    const Vocab& vocab, std::size_t window) {
  if (window == 0) throw ConfigError("window length must be positive");
  std::vector<std::int64_t> stream;
  for (const auto& doc : documents) {
    auto ids = tokenize(doc, vocab);
    if (ids.empty()) continue;
    if (!stream.empty()) stream.push_back(Vocab::kSep);
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  std::vector<std::vector<std::int64_t>> windows;
  for (std::size_t start = 0; start + window <= stream.size(); start += window) {
    windows.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(start),
                         stream.begin() + static_cast<std::ptrdiff_t>(start + window));
  }
  return windows;
}

}  // namespace lazyformer
