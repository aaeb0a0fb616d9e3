#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclopt/chat.hpp"
#include "iclopt/corpus.hpp"
#include "iclopt/prompting.hpp"
#include "iclopt/selection.hpp"

namespace iclopt {

class Gateway;

inline constexpr std::size_t kDefaultRepeats = 7;

/// Binary confusion tallies. An invalid prediction counts as wrong: it lands
/// in fn for a positive gold label, in fp for a negative one, and bumps
/// `invalid`.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t invalid = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  void record(bool gold, const ParsedLabel& prediction);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Empty denominators yield 0 for precision, recall and F1. Throws
/// PreconditionError when the matrix is empty.
Metrics metrics_from_confusion(const ConfusionMatrix& cm);

struct RunResult {
  ConfusionMatrix confusion;
  Metrics metrics;
};

struct EvalReport {
  std::vector<RunResult> per_run;
  Metrics mean;
  Metrics stddev;  // population standard deviation across runs
  std::size_t repeats = 0;
  std::string config_fingerprint;
};

/// Per-metric arithmetic mean and population standard deviation.
void summarize(EvalReport& report);

struct GenerationSettings {
  std::string model{kDefaultChatModel};
  double temperature = 0.0;
  int max_output_tokens = kClassificationMaxTokens;
};

struct ClassifyContext {
  const Corpus* train = nullptr;
  const EmbeddingIndex* index = nullptr;
  GenerationSettings generation;
  std::uint64_t nonce = 0;
};

struct Classification {
  ParsedLabel label;
  Messages prompt;
};

/// Builds the prompt, asks once, and re-asks once with the cache bypassed if
/// the answer does not parse.
Classification classify_passage(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& policy,
                                const Passage& passage, const ClassifyContext& context);

ParsedLabel classify_one(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& policy,
                         const Passage& passage, const ClassifyContext& context);

struct EvalOptions {
  std::size_t repeats = kDefaultRepeats;
  std::size_t parallelism = 8;
  GenerationSettings generation;
  const Corpus* train = nullptr;
  const EmbeddingIndex* index = nullptr;
  /// Run r uses nonce nonce_base + r, both as cache salt and random-sample key.
  std::uint64_t nonce_base = 0;
  std::string config_fingerprint;
};

/// Classifies every passage of `dataset` once per repeat. Runs are sequential;
/// passages within a run are classified by up to `parallelism` workers. Any
/// gateway error aborts the evaluation.
EvalReport evaluate(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& policy,
                    const Corpus& dataset, const EvalOptions& options);

/// Percent with one decimal, half-up: 0.6667 -> "66.7".
std::string format_percent(double ratio);

/// "| <label> | acc | prec | rec | f1 |"
std::string render_table_row(std::string_view label, const Metrics& metrics);

nlohmann::ordered_json to_json(const ConfusionMatrix& cm);
nlohmann::ordered_json to_json(const Metrics& m);
nlohmann::ordered_json to_json(const EvalReport& report);
Metrics metrics_from_json(const nlohmann::json& j);

}  // namespace iclopt
