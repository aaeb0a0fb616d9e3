#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclopt/clock.hpp"
#include "iclopt/corpus.hpp"
#include "iclopt/error.hpp"
#include "iclopt/evaluation.hpp"
#include "iclopt/prompting.hpp"
#include "iclopt/selection.hpp"

namespace iclopt {

class Gateway;

inline constexpr double kDefaultEpsilon = 0.01;
inline constexpr std::size_t kDefaultInstructionCharCap = 4000;

struct TunerConfig {
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
  std::size_t max_epochs = 1;
  std::optional<std::size_t> max_candidate_evals;  // nullopt = unlimited
  PolicyKind demos_during_tuning = PolicyKind::kZeroShot;  // zero_shot or static only
  std::size_t scoring_repeats = 1;
  std::size_t instruction_char_cap = kDefaultInstructionCharCap;
  std::size_t parallelism = 8;
  GenerationSettings generation;
  int rewrite_max_output_tokens = kRewriteMaxTokens;
  Clock clock;  // defaults to wall_clock()
};

/// Throws ConfigError for a negative epsilon, zero caps, or a tuning demo
/// policy other than zero_shot / static.
void validate(const TunerConfig& config);

/// One reflect-and-rewrite step.
struct TuneEvent {
  std::size_t epoch = 0;  // 1-based
  std::string passage_id;
  std::string wrong_prediction;
  std::string rationale;
  Instruction candidate_instruction;
  double incumbent_f1 = 0.0;
  std::optional<double> candidate_f1;  // unset when the candidate was invalid
  bool valid = true;
  bool accepted = false;
  std::string timestamp;
};

struct TuneResult {
  Instruction initial_instruction;
  double initial_train_f1 = 0.0;
  Instruction final_instruction;
  double final_train_f1 = 0.0;
  std::vector<TuneEvent> events;
  std::size_t epochs_completed = 0;
  std::size_t candidates_evaluated = 0;
  std::size_t misclassifications = 0;
};

/// Raised when the gateway fails mid-run; carries everything logged so far.
class TuneAborted : public Error {
 public:
  TuneAborted(const std::string& what, TuneResult partial, std::exception_ptr cause = nullptr)
      : Error(what), partial_(std::move(partial)), cause_(std::move(cause)) {}
  const TuneResult& partial() const noexcept { return partial_; }
  /// The error that stopped the run.
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  TuneResult partial_;
  std::exception_ptr cause_;
};

/// Training-set F1 of an instruction. The tuner's acceptance rule only sees
/// this number, so callers may substitute any scoring procedure.
using InstructionScorer = std::function<double(const Instruction&)>;

/// Mean F1 over `repeats` evaluation runs on the full training set.
double score_instruction(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& demos,
                         const Corpus& train, std::size_t repeats, const GenerationSettings& generation = {},
                         std::size_t parallelism = 8);

/// The demonstration policy the tuner classifies with.
SelectionPolicy tuning_policy(PolicyKind demos_during_tuning);

/// Greedy instruction search. Each epoch walks the training set in an order
/// shuffled by (seed, epoch). A misclassified passage triggers a reflection
/// turn and a rewrite turn; the rewrite replaces the incumbent iff its score
/// is at least incumbent + epsilon. Iteration continues with the next passage
/// either way. Stops after max_epochs or max_candidate_evals.
///
/// `scorer` defaults to score_instruction with the tuning demos.
TuneResult tune(Gateway& gateway, const Instruction& initial, const Corpus& train, const TunerConfig& config,
                InstructionScorer scorer = {});

nlohmann::ordered_json to_json(const TuneEvent& event);
nlohmann::ordered_json to_json(const TuneResult& result);

/// One JSON object per line, in event order.
std::string events_to_jsonl(const std::vector<TuneEvent>& events);

/// Human-readable history: initial text, every accepted rewrite (numbered,
/// with its F1 gain), every rejection, and the final text.
std::string render_evolution(const TuneResult& result);
void export_evolution(const TuneResult& result, const std::filesystem::path& path);

/// The final instruction recorded in an evolution log.
std::string read_final_instruction(const std::filesystem::path& path);

}  // namespace iclopt
