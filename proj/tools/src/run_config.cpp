#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lazyformer/error.hpp"
#include "lazyformer/layout.hpp"
#include "lazyformer_cli/cli.hpp"

namespace lazyformer::cli {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model",
       {"layout", "ffn_width", "embed_dim", "num_heads", "max_seq_len", "vocab_size",
        "attention_dropout", "hidden_dropout", "num_rel_buckets", "rel_max_distance"}},
      {"train",
       {"seed", "steps", "batch_size", "corpus", "vocab", "peak_lr", "warmup_steps",
        "warmup_ratio", "weight_decay", "beta1", "beta2", "adam_eps", "clip_norm", "mask_prob"}},
      {"output", {"log", "checkpoint", "checkpoint_every"}},
  };
  return keys;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::string text(const std::string& key) const { return tree_->get<std::string>(key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    const std::string raw = text(key);
    std::istringstream in(raw);
    T value{};
    in >> value;
    if (in.fail() || !(in >> std::ws).eof()) fail(key, raw);
    if constexpr (std::is_unsigned_v<T>) {
      if (raw.find('-') != std::string::npos) fail(key, raw);
    }
    return value;
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string raw = text(key);
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    fail(key, raw);
  }

  std::filesystem::path path(const std::string& key, const std::filesystem::path& base) const {
    if (!has(key) || text(key).empty()) return {};
    std::filesystem::path p(text(key));
    return p.is_absolute() ? p : (base / p).lexically_normal();
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& raw) const {
    throw ConfigError("[" + name_ + "] " + key + ": cannot parse '" + raw + "'");
  }

  const pt::ptree* tree_;
  std::string name_;
};

Section section(const pt::ptree& root, const std::string& name) {
  const auto it = root.find(name);
  return Section(it == root.not_found() ? nullptr : &it->second, name);
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree root;
  std::istringstream in(text);
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [name, body] : root) {
    const auto known = known_keys().find(name);
    if (known == known_keys().end()) {
      if (body.empty()) throw ConfigError("key '" + name + "' outside any section");
      throw ConfigError("unknown section [" + name + "]");
    }
    for (const auto& [key, value] : body) {
      if (!known->second.contains(key)) {
        throw ConfigError("unknown key '" + key + "' in section [" + name + "]");
      }
    }
  }

  RunConfig rc;
  const Section model = section(root, "model");
  ModelConfig& m = rc.model;
  if (model.has("layout")) m.layout = parse_layout(model.text("layout"));
  m.ffn_width = model.get<std::size_t>("ffn_width", m.ffn_width);
  m.embed_dim = model.get<std::size_t>("embed_dim", m.embed_dim);
  m.num_heads = model.get<std::size_t>("num_heads", m.num_heads);
  m.max_seq_len = model.get<std::size_t>("max_seq_len", m.max_seq_len);
  // 0 means: take the size of the vocabulary file.
  m.vocab_size = model.get<std::size_t>("vocab_size", 0);
  m.attention_dropout = model.flag("attention_dropout", m.attention_dropout);
  m.hidden_dropout_p = model.get<double>("hidden_dropout", m.hidden_dropout_p);
  m.num_rel_buckets = model.get<std::size_t>("num_rel_buckets", m.num_rel_buckets);
  m.rel_max_distance = model.get<std::size_t>("rel_max_distance", m.rel_max_distance);

  const Section train = section(root, "train");
  TrainOptions& t = rc.train;
  t.seed = train.get<std::uint64_t>("seed", t.seed);
  t.steps = train.get<std::size_t>("steps", t.steps);
  t.batch_size = train.get<std::size_t>("batch_size", t.batch_size);
  rc.corpus = train.path("corpus", base_dir);
  rc.vocab = train.path("vocab", base_dir);
  if (train.has("warmup_steps") && train.has("warmup_ratio")) {
    throw ConfigError("[train] set warmup_steps or warmup_ratio, not both");
  }
  const double peak = train.get<double>("peak_lr", t.schedule.peak_lr);
  if (train.has("warmup_steps")) {
    t.schedule = LrSchedule{peak, train.get<std::size_t>("warmup_steps", 0), t.steps};
  } else {
    t.schedule = LrSchedule::from_warmup_ratio(peak, train.get<double>("warmup_ratio", 0.01), t.steps);
  }
  t.adam.weight_decay = train.get<double>("weight_decay", t.adam.weight_decay);
  t.adam.beta1 = train.get<double>("beta1", t.adam.beta1);
  t.adam.beta2 = train.get<double>("beta2", t.adam.beta2);
  t.adam.eps = train.get<double>("adam_eps", t.adam.eps);
  t.adam.clip_norm = train.get<double>("clip_norm", t.adam.clip_norm);
  t.masking.mask_prob = train.get<double>("mask_prob", t.masking.mask_prob);

  const Section output = section(root, "output");
  rc.log = output.path("log", base_dir);
  rc.checkpoint = output.path("checkpoint", base_dir);
  t.checkpoint_every = output.get<std::size_t>("checkpoint_every", 0);
  t.checkpoint_path = rc.checkpoint;

  if (rc.corpus.empty()) throw ConfigError("[train] corpus is required");
  if (rc.vocab.empty()) throw ConfigError("[train] vocab is required");
  if (t.steps == 0) throw ConfigError("[train] steps must be >= 1");
  if (t.batch_size == 0) throw ConfigError("[train] batch_size must be >= 1");
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path());
}

}  // namespace lazyformer::cli
