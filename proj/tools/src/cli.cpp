#include "lazyformer_cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <iostream>
#include <sstream>

#include "lazyformer/accounting.hpp"
#include "lazyformer/bench.hpp"
#include "lazyformer/checkpoint.hpp"
#include "lazyformer/corpus.hpp"
#include "lazyformer/error.hpp"
#include "lazyformer/layout.hpp"
#include "lazyformer/tokenizer.hpp"
#include "lazyformer/verify.hpp"

namespace lazyformer::cli {

namespace {

enum class Verbosity { kQuiet, kInfo, kDebug };

// LAZYFORMER_LOG=quiet|info|debug
Verbosity verbosity() {
  const char* env = std::getenv("LAZYFORMER_LOG");
  if (!env) return Verbosity::kInfo;
  const std::string v(env);
  if (v == "quiet" || v == "0") return Verbosity::kQuiet;
  if (v == "debug" || v == "2") return Verbosity::kDebug;
  return Verbosity::kInfo;
}

constexpr const char* kFullScaleNote =
    "Desk-scale defaults. Full-scale reference values: batch 256, 1M steps, peak lr 1e-4, "
    "warmup ratio 0.01, weight decay 0.01, Adam betas (0.9, 0.999), eps 1e-6, clip norm 1.0, "
    "dropout 0.1, 12 layers, (W,H,N) = (3072,768,12), vocab 32768, max length 512.";

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
};

struct CountArgs {
  std::string layout;
  std::size_t ffn_width = 0, embed_dim = 0, heads = 0;
  std::size_t vocab = 32768;
  std::size_t max_len = 512;
  std::size_t seq_len = 0;
  bool json = false;
};

struct BenchArgs {
  std::vector<std::string> layouts{"M1x12", "M2x6"};
  std::vector<std::size_t> seq_lens{128, 256, 512};
  std::size_t iters = 5;
  std::size_t warmup = 1;
  double min_time_ms = 0.0;
  std::string mode = "forward";
  std::string out;
  std::string format = "csv";
  std::size_t ffn_width = 1024, embed_dim = 256, heads = 4, vocab = 1024;
  bool train_mode = false;
  bool attention_dropout = false;
  bool compensate = false;
  bool sequential = false;
  std::uint64_t seed = 1;
};

void ensure_parent(const std::filesystem::path& file) {
  if (file.empty()) return;
  const auto parent = file.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream probe(file, std::ios::app);
  if (!probe) throw ConfigError("cannot write " + file.string());
}

void require_readable(const std::filesystem::path& file, const char* what) {
  std::ifstream in(file);
  if (!in) throw ConfigError(std::string("cannot read ") + what + " " + file.string());
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  RunConfig rc = load_run_config(args.config);
  if (args.seed) rc.train.seed = *args.seed;
  if (args.steps) {
    const double ratio = static_cast<double>(rc.train.schedule.warmup_steps) /
                         static_cast<double>(rc.train.schedule.max_steps);
    rc.train.steps = *args.steps;
    rc.train.schedule = LrSchedule::from_warmup_ratio(rc.train.schedule.peak_lr, ratio, *args.steps);
  }
  require_readable(rc.corpus, "corpus");
  require_readable(rc.vocab, "vocab");
  if (rc.log.empty()) throw ConfigError("[output] log is required");
  ensure_parent(rc.log);
  ensure_parent(rc.checkpoint);

  const Vocab vocab = Vocab::load(rc.vocab);
  if (rc.model.vocab_size == 0) rc.model.vocab_size = vocab.size();
  if (rc.model.vocab_size < vocab.size()) {
    throw ConfigError("vocab_size " + std::to_string(rc.model.vocab_size) +
                      " smaller than the vocabulary file (" + std::to_string(vocab.size()) + ")");
  }
  rc.model.validate();
  rc.train.schedule.validate();
  const auto windows = pack_windows(load_documents(rc.corpus), vocab, rc.model.max_seq_len);
  if (windows.empty()) throw ConfigError("corpus yields no window of " +
                                         std::to_string(rc.model.max_seq_len) + " tokens");

  RandomState init(rc.train.seed);
  Model model = build_model(rc.model, init);
  const Verbosity level = verbosity();
  if (level != Verbosity::kQuiet) {
    err << "train: " << rc.model.layout.to_string() << " params=" << model.parameter_count()
        << " windows=" << windows.size() << " steps=" << rc.train.steps << '\n';
  }

  std::ofstream log(rc.log, std::ios::trunc);
  log << "step,loss,lr,wall_ms\n";
  log << std::setprecision(10);
  const std::size_t every = std::max<std::size_t>(1, rc.train.steps / 20);
  try {
    train(model, windows, rc.train, [&](const TrainLogRow& row) {
      log << row.step << ',' << row.loss << ',' << row.lr << ',' << std::setprecision(4)
          << row.wall_ms << std::setprecision(10) << '\n';
      if (level == Verbosity::kDebug || (level == Verbosity::kInfo && row.step % every == 0)) {
        err << "step " << row.step << " loss " << row.loss << " lr " << row.lr << '\n';
      }
    });
  } catch (const NumericError& e) {
    log.flush();
    err << "error: training aborted: " << e.what() << '\n';
    return kExitFailure;
  }
  out << "wrote " << rc.log.string();
  if (!rc.checkpoint.empty()) out << " and " << rc.checkpoint.string();
  out << '\n';
  return kExitOk;
}

int cmd_count(const CountArgs& args, std::ostream& out) {
  ModelConfig config;
  config.layout = parse_layout(args.layout);
  config.ffn_width = args.ffn_width;
  config.embed_dim = args.embed_dim;
  config.num_heads = args.heads;
  config.vocab_size = args.vocab;
  config.max_seq_len = args.max_len;
  config.validate();

  const CostReport report =
      args.seq_len ? flop_model(config, args.seq_len) : count_params(config);
  const std::size_t k = config.layout.total_layers();
  ModelConfig baseline = config;
  baseline.layout = Layout::uniform(1, k);
  const std::size_t baseline_total = count_params(baseline).total_params;
  ModelConfig widened = config;
  widened.ffn_width = compensated_width(args.ffn_width, args.embed_dim, k, config.layout);
  const std::size_t widened_total = count_params(widened).total_params;

  if (args.json) {
    out << report_json_lines(report);
    out << R"({"compensated_width":)" << widened.ffn_width << R"(,"compensated_params":)"
        << widened_total << R"(,"baseline_layout":")" << baseline.layout.to_string()
        << R"(","baseline_params":)" << baseline_total << "}\n";
    return kExitOk;
  }
  out << config.layout.to_string() << " (W,H,N)=(" << config.ffn_width << ',' << config.embed_dim
      << ',' << config.num_heads << ") vocab=" << config.vocab_size
      << " max_len=" << config.max_seq_len << '\n';
  out << format_report(report);
  out << "baseline " << baseline.layout.to_string() << ": " << baseline_total << " params\n";
  out << "compensated ffn_width: " << widened.ffn_width << " -> " << widened_total << " params\n";
  return kExitOk;
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  if (args.layouts.empty()) throw PlanError("--layouts is empty");
  if (args.mode != "forward" && args.mode != "forward-backward") {
    throw PlanError("--mode must be forward or forward-backward");
  }
  if (args.format != "csv" && args.format != "markdown") {
    throw PlanError("--format must be csv or markdown");
  }
  BenchPlan plan;
  plan.seq_lens = args.seq_lens;
  plan.iters = args.iters;
  plan.warmup_iters = args.warmup;
  plan.min_time_ms = args.min_time_ms;
  plan.interleave = !args.sequential;
  plan.measure = args.mode == "forward" ? BenchMeasure::kForward : BenchMeasure::kForwardBackward;
  plan.train_mode = args.train_mode;
  plan.seed = args.seed;
  std::size_t max_len = 1;
  for (auto n : args.seq_lens) max_len = std::max(max_len, n);
  for (const auto& spec : args.layouts) {
    ModelConfig c;
    c.layout = parse_layout(spec);
    c.embed_dim = args.embed_dim;
    c.num_heads = args.heads;
    c.vocab_size = args.vocab;
    c.max_seq_len = max_len;
    c.attention_dropout = args.attention_dropout;
    c.ffn_width = args.compensate ? compensated_width(args.ffn_width, args.embed_dim,
                                                      c.layout.total_layers(), c.layout)
                                  : args.ffn_width;
    plan.configs.push_back({c.layout.to_string(), c});
  }
  plan.baseline = plan.configs.front().label;

  std::ofstream file;
  if (!args.out.empty()) {
    ensure_parent(args.out);
    file.open(args.out, std::ios::trunc);
  }
  const bool chatty = verbosity() != Verbosity::kQuiet;
  const BenchResult result = run_bench(plan, [&](const BenchCell& cell) {
    if (chatty) {
      err << "bench " << cell.label << " n=" << cell.seq_len << " median " << cell.median_ms
          << " ms, speedup " << cell.speedup << '\n';
    }
  });
  const std::string report =
      emit_report(result, args.format == "csv" ? ReportFormat::kCsv : ReportFormat::kMarkdown);
  if (file.is_open()) {
    file << report;
    out << "wrote " << args.out << '\n';
  } else {
    out << report;
  }
  return kExitOk;
}

int cmd_verify(std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const auto results = run_verify(seed);
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    if (!r.passed) ++failed;
  }
  out << results.size() - failed << '/' << results.size() << " properties pass\n";
  if (failed == 0) return kExitOk;
  err << "verify: failing properties:";
  for (const auto& r : results) {
    if (!r.passed) err << " [" << r.name << ']';
  }
  err << '\n';
  return kExitFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LazyFormer: transformer encoders with lazy attention blocks", "lazyformer"};
  app.require_subcommand(1);
  app.allow_extras(false);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "MLM pre-training from a config file");
  train->footer(kFullScaleNote);
  train->add_option("--config", train_args.config, "Sectioned key=value run config")
      ->required();
  train->add_option("--seed", train_args.seed, "Override [train] seed");
  train->add_option("--steps", train_args.steps, "Override [train] steps (warmup ratio kept)");

  CountArgs count_args;
  auto* count = app.add_subcommand("count", "Parameter and FLOP breakdown of a layout");
  count->add_option("layout", count_args.layout, std::string(kLayoutGrammar))->required();
  count->add_option("W", count_args.ffn_width, "FFN width")->required();
  count->add_option("H", count_args.embed_dim, "Embedding dimension")->required();
  count->add_option("N", count_args.heads, "Attention heads")->required();
  count->add_option("--vocab", count_args.vocab, "Vocabulary size")->capture_default_str();
  count->add_option("--max-len", count_args.max_len, "Positions in the absolute table")
      ->capture_default_str();
  count->add_option("--seq-len", count_args.seq_len, "Also report forward FLOPs at this length");
  count->add_flag("--json", count_args.json, "JSON-lines output");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Wall-clock benchmark of layouts over lengths");
  bench->add_option("--layouts", bench_args.layouts, "Layouts; the first is the baseline")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--seq-lens", bench_args.seq_lens, "Sequence lengths")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--iters", bench_args.iters, "Timed runs per cell (>= 3)")
      ->capture_default_str();
  bench->add_option("--warmup", bench_args.warmup, "Discarded runs per cell (>= 1)")
      ->capture_default_str();
  bench->add_option("--min-time-ms", bench_args.min_time_ms,
                    "Extend timing until a cell's runs total this long")
      ->capture_default_str();
  bench->add_option("--mode", bench_args.mode, "forward or forward-backward")
      ->capture_default_str();
  bench->add_option("--out", bench_args.out, "Write the report here instead of stdout");
  bench->add_option("--format", bench_args.format, "csv or markdown")->capture_default_str();
  bench->add_option("--ffn-width", bench_args.ffn_width, "W")->capture_default_str();
  bench->add_option("--embed-dim", bench_args.embed_dim, "H")->capture_default_str();
  bench->add_option("--heads", bench_args.heads, "N")->capture_default_str();
  bench->add_option("--vocab", bench_args.vocab, "Vocabulary size")->capture_default_str();
  bench->add_flag("--train-mode", bench_args.train_mode, "Time training-mode passes (dropout on)");
  bench->add_flag("--attention-dropout", bench_args.attention_dropout,
                  "Enable attention-probability dropout");
  bench->add_flag("--compensate", bench_args.compensate,
                  "Widen each layout's FFN to match the baseline parameter count");
  bench->add_flag("--sequential", bench_args.sequential,
                  "Run each cell's passes back to back instead of in alternating rounds");
  bench->add_option("--seed", bench_args.seed, "Seed for weights and inputs")
      ->capture_default_str();

  std::uint64_t verify_seed = 1;
  auto* verify = app.add_subcommand("verify", "Run the fast invariant suite");
  verify->add_option("--seed", verify_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "run '" << sub->get_name() << " --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args, out, err);
    if (*count) return cmd_count(count_args, out);
    if (*bench) return cmd_bench(bench_args, out, err);
    return cmd_verify(verify_seed, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\nlayout grammar: " << kLayoutGrammar << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PlanError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const VocabError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace lazyformer::cli
