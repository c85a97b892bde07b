#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "lazyformer/model.hpp"
#include "lazyformer/trainer.hpp"

namespace lazyformer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime failure, failed property
inline constexpr int kExitUsage = 2;    // bad arguments, config or input files

/// Everything `train` needs, read from a sectioned key=value file.
struct RunConfig {
  ModelConfig model;
  TrainOptions train;
  std::filesystem::path corpus;
  std::filesystem::path vocab;
  std::filesystem::path log;
  std::filesystem::path checkpoint;
};

/// Parses config text. Relative paths resolve against `base_dir`. Unknown
/// sections or keys, duplicate keys and malformed values throw ConfigError;
/// a bad layout throws ParseError.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lazyformer::cli
