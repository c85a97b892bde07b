#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lazyformer {

inline constexpr std::string_view kLayoutGrammar =
    "M<layers>x<blocks> (e.g. M2x6: 6 blocks of 2 layers) or M<m1>M<m2>... "
    "(e.g. M5M3M2M2, first-listed block is the lowest); all counts >= 1";

/// Sizes of the lazy blocks from the embeddings upwards. Each block's first
/// layer computes attention; the others reuse it. [1, 1, ..., 1] is a
/// standard transformer.
class Layout {
 public:
  Layout() = default;
  /// Throws ConfigError if empty or any size is zero.
  explicit Layout(std::vector<std::size_t> block_sizes);

  static Layout uniform(std::size_t layers_per_block, std::size_t blocks);

  const std::vector<std::size_t>& block_sizes() const noexcept { return sizes_; }
  std::size_t num_blocks() const noexcept { return sizes_.size(); }
  std::size_t total_layers() const noexcept;

  /// Canonical spelling: "M2x6" when uniform, "M5M3M2M2" otherwise.
  std::string to_string() const;

  bool operator==(const Layout&) const = default;

 private:
  std::vector<std::size_t> sizes_;
};

/// Parses "M<b>x<g>" or "M<m1>M<m2>...". Throws ParseError with the offset
/// of the first offending character.
Layout parse_layout(std::string_view spec);

}  // namespace lazyformer
