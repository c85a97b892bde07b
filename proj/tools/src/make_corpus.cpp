// Regenerates the bundled synthetic corpus and its vocabulary.
#include <CLI11.hpp>

#include <iostream>

#include "lazyformer/corpus.hpp"
#include "lazyformer/tokenizer.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic MLM corpus and vocabulary", "lazyformer_make_corpus"};
  lazyformer::SyntheticCorpusOptions options;
  std::string corpus = "corpus.txt";
  std::string vocab = "vocab.txt";
  std::size_t vocab_size = 512;
  app.add_option("--corpus", corpus)->capture_default_str();
  app.add_option("--vocab", vocab)->capture_default_str();
  app.add_option("--vocab-size", vocab_size)->capture_default_str();
  app.add_option("--documents", options.documents)->capture_default_str();
  app.add_option("--words", options.distinct_words)->capture_default_str();
  app.add_option("--seed", options.seed)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const auto docs = lazyformer::synthetic_documents(options);
  lazyformer::save_documents(docs, corpus);
  const auto v = lazyformer::Vocab::from_documents(docs, vocab_size);
  v.save(vocab);
  std::cout << docs.size() << " documents, " << v.size() << " tokens\n";
  return 0;
}
