#include "lazyformer/layout.hpp"

#include <cctype>
#include <numeric>

#include "lazyformer/error.hpp"

namespace lazyformer {

namespace {

constexpr std::size_t kMaxCount = 1'000'000;

class LayoutParser {
 public:
  explicit LayoutParser(std::string_view text) : text_(text) {}

  Layout parse() {
    if (text_.empty()) fail("empty layout");
    std::vector<std::size_t> sizes;
    expect('M');
    sizes.push_back(number());
    if (pos_ < text_.size() && text_[pos_] == 'x') {
      ++pos_;
      const std::size_t blocks = number();
      if (pos_ != text_.size()) fail("unexpected trailing characters");
      return Layout(std::vector<std::size_t>(blocks, sizes.front()));
    }
    while (pos_ < text_.size()) {
      expect('M');
      sizes.push_back(number());
    }
    return Layout(std::move(sizes));
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("invalid layout '" + std::string(text_) + "': " + why +
                         "; expected " + std::string(kLayoutGrammar),
                     pos_);
  }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::size_t number() {
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      if (value > kMaxCount) fail("count too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a number");
    if (value == 0) {
      pos_ = start;
      fail("counts must be at least 1");
    }
    return value;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Layout::Layout(std::vector<std::size_t> block_sizes) : sizes_(std::move(block_sizes)) {
  if (sizes_.empty()) throw ConfigError("layout needs at least one block");
  for (auto m : sizes_) {
    if (m == 0) throw ConfigError("layout block sizes must be at least 1");
  }
}

Layout Layout::uniform(std::size_t layers_per_block, std::size_t blocks) {
  return Layout(std::vector<std::size_t>(blocks, layers_per_block));
}

std::size_t Layout::total_layers() const noexcept {
  return std::accumulate(sizes_.begin(), sizes_.end(), std::size_t{0});
}

std::string Layout::to_string() const {
  if (sizes_.empty()) return "";
  bool uniform = true;
  for (auto m : sizes_) uniform = uniform && m == sizes_.front();
  if (uniform) {
    return "M" + std::to_string(sizes_.front()) + "x" + std::to_string(sizes_.size());
  }
  std::string out;
  for (auto m : sizes_) out += "M" + std::to_string(m);
  return out;
}

Layout parse_layout(std::string_view spec) { return LayoutParser(spec).parse(); }

}  // namespace lazyformer
