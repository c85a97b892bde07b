#include "lazyformer/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lazyformer/error.hpp"

namespace lazyformer {

namespace {

constexpr char kMagic[4] = {'L', 'Z', 'Y', 'F'};

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    value = to_little_endian(value);
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    out_.append(raw, sizeof(T));
  }
  void u32(std::size_t v) { put(static_cast<std::uint32_t>(v)); }
  void u64(std::size_t v) { put(static_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little_endian(value);
  }
  std::size_t u32(const char* what) { return get<std::uint32_t>(what); }
  std::size_t u64(const char* what) {
    const auto v = get<std::uint64_t>(what);
    if (v > (1ULL << 40)) throw CheckpointError(std::string("implausible ") + what);
    return static_cast<std::size_t>(v);
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string save_checkpoint(const Model& model) {
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  const auto& c = model.config;
  w.u64(c.ffn_width);
  w.u64(c.embed_dim);
  w.u64(c.num_heads);
  w.u64(c.vocab_size);
  w.u64(c.max_seq_len);
  w.u32(c.layout.num_blocks());
  for (auto m : c.layout.block_sizes()) w.u64(m);
  w.put<std::uint8_t>(c.attention_dropout ? 1 : 0);
  w.put<double>(c.hidden_dropout_p);
  w.u64(c.num_rel_buckets);
  w.u64(c.rel_max_distance);

  const auto params = model.parameters();
  w.u32(params.size());
  for (const auto& [name, tensor] : params) {
    w.u32(name.size());
    w.bytes(name);
    w.u32(tensor.rank());
    for (auto d : tensor.shape()) w.u64(d);
    for (double v : tensor.data()) w.put<double>(v);
  }
  return w.take();
}

Model load_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string_view(kMagic, 4)) {
    throw CheckpointError("not a checkpoint: bad magic header");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig c;
  c.ffn_width = r.u64("ffn_width");
  c.embed_dim = r.u64("embed_dim");
  c.num_heads = r.u64("num_heads");
  c.vocab_size = r.u64("vocab_size");
  c.max_seq_len = r.u64("max_seq_len");
  const std::size_t blocks = r.u32("layout");
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < blocks; ++i) sizes.push_back(r.u64("layout block"));
  c.attention_dropout = r.get<std::uint8_t>("attention_dropout") != 0;
  c.hidden_dropout_p = r.get<double>("hidden_dropout_p");
  c.num_rel_buckets = r.u64("num_rel_buckets");
  c.rel_max_distance = r.u64("rel_max_distance");

  Model model;
  try {
    c.layout = Layout(std::move(sizes));
    RandomState unused(0);
    model = build_model(c, unused);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint holds an invalid config: ") + e.what());
  }

  auto params = model.parameters();
  const std::size_t count = r.u32("tensor count");
  if (count != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, config needs " +
                          std::to_string(params.size()));
  }
  for (auto& [name, tensor] : params) {
    const std::size_t name_len = r.u32("name length");
    const auto stored = r.bytes(name_len, "tensor name");
    if (stored != name) {
      throw CheckpointError("expected tensor '" + name + "', found '" + std::string(stored) + "'");
    }
    const std::size_t rank = r.u32("rank");
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(r.u64("dimension"));
    if (shape != tensor.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_string(shape) +
                            ", config implies " + shape_string(tensor.shape()));
    }
    for (auto& v : tensor.data()) v = r.get<double>("tensor data");
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return model;
}

void save_checkpoint_file(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  const auto bytes = save_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Model load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_checkpoint(buffer.str());
}

}  // namespace lazyformer
