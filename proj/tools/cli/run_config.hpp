#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclopt/backends.hpp"
#include "iclopt/clock.hpp"
#include "iclopt/corpus.hpp"
#include "iclopt/evaluation.hpp"
#include "iclopt/selection.hpp"
#include "iclopt/tuner.hpp"

namespace iclopt::cli {

enum class TimestampMode { kWall, kLogical };

struct CorpusSource {
  std::optional<std::filesystem::path> path;  // single corpus, split with `split`
  std::optional<std::filesystem::path> train;
  std::optional<std::filesystem::path> test;
  std::vector<std::string> test_reports;
  std::optional<std::size_t> test_report_count;
  std::uint64_t split_seed = 0;
};

struct MatrixSpec {
  std::vector<InstructionOrigin> instructions{InstructionOrigin::kBuiltinSimple, InstructionOrigin::kBuiltinExpert};
  std::vector<PolicyKind> strategies{PolicyKind::kZeroShot, PolicyKind::kStatic, PolicyKind::kRandom,
                                     PolicyKind::kSimilar};
  std::vector<PolicyKind> tuning_demos{PolicyKind::kZeroShot, PolicyKind::kStatic};
  bool tuned = true;
};

/// Fully resolved settings for one command. Every field has a default, so the
/// resolved JSON (and its fingerprint) is complete.
struct RunConfig {
  CorpusSource corpus;
  BackendConfig backend;
  BackendConfig embedder;
  std::string model{kDefaultChatModel};
  double temperature = 0.0;
  std::string instruction = "simple";  // simple | expert | path to a file or tuned output dir
  SelectionPolicy policy;
  std::optional<std::filesystem::path> index_path;
  std::size_t repeats = kDefaultRepeats;
  std::size_t parallelism = 8;
  TunerConfig tuner;
  MatrixSpec matrix;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  TimestampMode timestamps = TimestampMode::kLogical;

  GenerationSettings generation() const;
  Clock clock() const;
};

/// Reads a JSON config file (comments allowed).
nlohmann::json load_config_json(const std::filesystem::path& path);

/// Sets a dotted key ("tuner.epsilon") in a config object, creating parents.
void set_key(nlohmann::json& config, const std::string& dotted_key, nlohmann::json value);

/// Applies defaults and validates. Unknown keys are rejected.
RunConfig resolve(const nlohmann::json& config);

/// The resolved configuration as JSON, with every default written out.
nlohmann::ordered_json to_json(const RunConfig& config);

/// SHA-256 of the resolved configuration, excluding output and cache
/// locations.
std::string config_fingerprint(const RunConfig& config);

/// "simple", "expert", a text file, an evolution log, or a tune output
/// directory (reads tuned_instruction.txt).
Instruction resolve_instruction(const std::string& source);

struct Datasets {
  std::optional<Corpus> train;
  std::optional<Corpus> test;
};

/// Loads train/test, splitting a single corpus when configured.
Datasets load_datasets(const CorpusSource& source);

}  // namespace iclopt::cli
