#include "iclopt/tuner.hpp"

#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclopt/gateway.hpp"
#include "iclopt/hashing.hpp"
#include "iclopt/random.hpp"
#include "iclopt/templates.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

namespace {

// Absorbs rounding in incumbent + epsilon so that a gain of exactly epsilon
// is accepted.
constexpr double kAcceptSlack = 1e-12;

constexpr std::string_view kFinalMarker = "=== Final instruction";

}  // namespace

void validate(const TunerConfig& config) {
  if (!(config.epsilon >= 0.0)) throw ConfigError("tuner: epsilon must be >= 0");
  if (config.max_epochs < 1) throw ConfigError("tuner: max_epochs must be >= 1");
  if (config.max_candidate_evals && *config.max_candidate_evals < 1) {
    throw ConfigError("tuner: max_candidate_evals must be >= 1");
  }
  if (config.scoring_repeats < 1) throw ConfigError("tuner: scoring_repeats must be >= 1");
  if (config.instruction_char_cap < 1) throw ConfigError("tuner: instruction_char_cap must be >= 1");
  if (config.parallelism < 1) throw ConfigError("tuner: parallelism must be >= 1");
  if (config.demos_during_tuning != PolicyKind::kZeroShot && config.demos_during_tuning != PolicyKind::kStatic) {
    throw ConfigError("tuner: demos during tuning must be zero_shot or static");
  }
}

SelectionPolicy tuning_policy(PolicyKind demos_during_tuning) {
  if (demos_during_tuning == PolicyKind::kStatic) return SelectionPolicy::fixed(builtin_templates().static_demos);
  return SelectionPolicy::zero_shot();
}

double score_instruction(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& demos,
                         const Corpus& train, std::size_t repeats, const GenerationSettings& generation,
                         std::size_t parallelism) {
  EvalOptions options;
  options.repeats = repeats;
  options.parallelism = parallelism;
  options.generation = generation;
  options.train = &train;
  return evaluate(gateway, instruction, demos, train, options).mean.f1;
}

TuneResult tune(Gateway& gateway, const Instruction& initial, const Corpus& train, const TunerConfig& config,
                InstructionScorer scorer) {
  validate(config);
  if (trim(initial.text).empty()) throw PreconditionError("tune: initial instruction is empty");
  const SelectionPolicy demos = tuning_policy(config.demos_during_tuning);
  if (!scorer) {
    scorer = [&](const Instruction& instruction) {
      return score_instruction(gateway, instruction, demos, train, config.scoring_repeats, config.generation,
                               config.parallelism);
    };
  }
  const Clock clock = config.clock ? config.clock : wall_clock();

  TuneResult result;
  result.initial_instruction = initial;
  result.final_instruction = initial;

  const auto budget_left = [&] {
    return !config.max_candidate_evals || result.candidates_evaluated < *config.max_candidate_evals;
  };

  try {
    result.initial_train_f1 = scorer(initial);
    result.final_train_f1 = result.initial_train_f1;

    ChatRequest rewrite;
    rewrite.model = config.generation.model;
    rewrite.temperature = config.generation.temperature;
    rewrite.max_output_tokens = config.rewrite_max_output_tokens;

    for (std::size_t epoch = 1; epoch <= config.max_epochs && budget_left(); ++epoch) {
      std::vector<std::size_t> order(train.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng(mix_seed(config.seed, epoch)).shuffle(order);

      bool stopped = false;
      for (std::size_t i : order) {
        if (!budget_left()) {
          stopped = true;
          break;
        }
        const Passage& passage = train[i];
        ClassifyContext context{&train, nullptr, config.generation, 0};
        Classification cls = classify_passage(gateway, result.final_instruction, demos, passage, context);
        if (cls.label.valid() && cls.label.as_bool() == passage.label) continue;
        ++result.misclassifications;

        TuneEvent event;
        event.epoch = epoch;
        event.passage_id = passage.id;
        event.wrong_prediction = trim(cls.label.raw).empty() ? std::string(render_label(!passage.label))
                                                             : cls.label.raw;
        event.incumbent_f1 = result.final_train_f1;

        rewrite.messages = assemble_reflection_prompt(cls.prompt, event.wrong_prediction, passage.label);
        event.rationale = gateway.complete(rewrite).text;
        if (!trim(event.rationale).empty()) {
          Messages dialogue = rewrite.messages;
          dialogue.push_back({Role::kAssistant, event.rationale});
          rewrite.messages = assemble_modification_prompt(dialogue);
          event.candidate_instruction = candidate_from_modification(gateway.complete(rewrite).text);
        } else {
          event.candidate_instruction = Instruction{"", InstructionOrigin::kTuned};
        }

        const std::string& text = event.candidate_instruction.text;
        event.valid = !text.empty() && text.size() <= config.instruction_char_cap;
        if (event.valid) {
          event.candidate_f1 = scorer(event.candidate_instruction);
          ++result.candidates_evaluated;
          event.accepted = *event.candidate_f1 + kAcceptSlack >= event.incumbent_f1 + config.epsilon;
          if (event.accepted) {
            result.final_instruction = event.candidate_instruction;
            result.final_train_f1 = *event.candidate_f1;
          }
        }
        event.timestamp = clock();
        result.events.push_back(std::move(event));
      }
      if (stopped) break;
      ++result.epochs_completed;
    }
  } catch (const TuneAborted&) {
    throw;
  } catch (const Error& e) {
    throw TuneAborted(fmt::format("tuning aborted: {}", e.what()), std::move(result), std::current_exception());
  }
  return result;
}

nlohmann::ordered_json to_json(const TuneEvent& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["passage_id"] = e.passage_id;
  j["wrong_prediction"] = e.wrong_prediction;
  j["rationale"] = e.rationale;
  j["candidate_instruction"] = {{"text", e.candidate_instruction.text},
                                {"origin", origin_name(e.candidate_instruction.origin)}};
  j["incumbent_f1"] = e.incumbent_f1;
  j["candidate_f1"] = e.candidate_f1 ? nlohmann::ordered_json(*e.candidate_f1) : nlohmann::ordered_json();
  j["valid"] = e.valid;
  j["accepted"] = e.accepted;
  j["timestamp"] = e.timestamp;
  return j;
}

nlohmann::ordered_json to_json(const TuneResult& r) {
  nlohmann::ordered_json j;
  j["initial_instruction"] = {{"text", r.initial_instruction.text},
                              {"origin", origin_name(r.initial_instruction.origin)}};
  j["initial_train_f1"] = r.initial_train_f1;
  j["final_instruction"] = {{"text", r.final_instruction.text}, {"origin", origin_name(r.final_instruction.origin)}};
  j["final_train_f1"] = r.final_train_f1;
  j["epochs_completed"] = r.epochs_completed;
  j["candidates_evaluated"] = r.candidates_evaluated;
  j["misclassifications"] = r.misclassifications;
  std::size_t accepted = 0;
  for (const auto& e : r.events) accepted += e.accepted ? 1 : 0;
  j["accepted"] = accepted;
  return j;
}

std::string events_to_jsonl(const std::vector<TuneEvent>& events) {
  std::string out;
  for (const auto& e : events) out += to_json(e).dump() + '\n';
  return out;
}

std::string render_evolution(const TuneResult& r) {
  std::string out;
  out += fmt::format("Initial instruction (train F1 {:.4f}):\n{}\n\n", r.initial_train_f1, r.initial_instruction.text);
  out += "Evolution:\n";
  std::size_t number = 0;
  for (const auto& e : r.events) {
    if (!e.valid) {
      out += fmt::format("-  invalid rewrite after passage {} (epoch {}): {}\n", e.passage_id, e.epoch,
                         e.candidate_instruction.text.empty() ? "empty" : "over length cap");
    } else if (e.accepted) {
      out += fmt::format("{}. accepted after passage {} (epoch {}): train F1 {:.4f} -> {:.4f} (ΔF1 {:+.4f})\n",
                         ++number, e.passage_id, e.epoch, e.incumbent_f1, *e.candidate_f1,
                         *e.candidate_f1 - e.incumbent_f1);
      out += fmt::format("   {}\n", e.candidate_instruction.text);
    } else {
      out += fmt::format("-  rejected after passage {} (epoch {}): train F1 {:.4f} vs incumbent {:.4f} (ΔF1 {:+.4f})\n",
                         e.passage_id, e.epoch, *e.candidate_f1, e.incumbent_f1, *e.candidate_f1 - e.incumbent_f1);
    }
  }
  if (r.events.empty()) out += "(no rewrites)\n";
  out += fmt::format("\n{} accepted, {} candidates evaluated, {} epochs completed\n\n", number,
                     r.candidates_evaluated, r.epochs_completed);
  out += fmt::format("{} (train F1 {:.4f}) ===\n{}\n", kFinalMarker, r.final_train_f1, r.final_instruction.text);
  return out;
}

void export_evolution(const TuneResult& result, const std::filesystem::path& path) {
  write_file_atomic(path, render_evolution(result));
}

std::string read_final_instruction(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::size_t at = std::string::npos;
  for (std::size_t pos = content.find(kFinalMarker); pos != std::string::npos;
       pos = content.find(kFinalMarker, pos + 1)) {
    if (pos == 0 || content[pos - 1] == '\n') at = pos;
  }
  if (at == std::string::npos) throw LoadError(fmt::format("{}: no final instruction section", path.string()));
  const std::size_t body = content.find('\n', at);
  if (body == std::string::npos) throw LoadError(fmt::format("{}: truncated final instruction", path.string()));
  std::string text = content.substr(body + 1);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

}  // namespace iclopt
