#include "iclopt/prompting.hpp"

#include <optional>

#include <fmt/format.h>

#include "iclopt/error.hpp"
#include "iclopt/templates.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

std::string_view origin_name(InstructionOrigin origin) noexcept {
  switch (origin) {
    case InstructionOrigin::kBuiltinSimple: return "builtin_simple";
    case InstructionOrigin::kBuiltinExpert: return "builtin_expert";
    case InstructionOrigin::kTuned: return "tuned";
    case InstructionOrigin::kUser: return "user";
  }
  return "user";
}

InstructionOrigin parse_origin(std::string_view name) {
  if (name == "builtin_simple") return InstructionOrigin::kBuiltinSimple;
  if (name == "builtin_expert") return InstructionOrigin::kBuiltinExpert;
  if (name == "tuned") return InstructionOrigin::kTuned;
  if (name == "user") return InstructionOrigin::kUser;
  throw PreconditionError(fmt::format("unknown instruction origin '{}'", name));
}

std::string_view render_label(bool label) noexcept { return label ? "True" : "False"; }

namespace {

std::string_view strip_trailing_punct(std::string_view s) {
  while (!s.empty()) {
    const char c = s.back();
    if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!') {
      s.remove_suffix(1);
    } else {
      break;
    }
  }
  return s;
}

std::optional<bool> as_boolean_token(std::string_view token) {
  if (token == "true") return true;
  if (token == "false") return false;
  return std::nullopt;
}

}  // namespace

ParsedLabel parse_label(std::string_view raw) {
  ParsedLabel parsed;
  parsed.raw = std::string(raw);
  const std::string normalized = to_lower(strip_trailing_punct(trim(raw)));
  auto decided = as_boolean_token(normalized);
  if (!decided) {
    const auto end = normalized.find_first_of(" \t\r\n\f\v");
    if (end != std::string::npos) {
      decided = as_boolean_token(strip_trailing_punct(std::string_view(normalized).substr(0, end)));
    }
  }
  if (decided) parsed.value = *decided ? LabelValue::kTrue : LabelValue::kFalse;
  return parsed;
}

Messages assemble_classification_prompt(const Instruction& instruction,
                                        std::span<const Demonstration> demos,
                                        const std::string& passage_text) {
  if (trim(passage_text).empty()) throw PreconditionError("passage text is empty");
  Messages messages;
  messages.reserve(2 + 2 * demos.size());
  messages.push_back({Role::kSystem, instruction.text});
  for (const auto& demo : demos) {
    messages.push_back({Role::kUser, demo.input_text});
    messages.push_back({Role::kAssistant, std::string(render_label(demo.label))});
  }
  messages.push_back({Role::kUser, passage_text});
  return messages;
}

Messages assemble_reflection_prompt(const Messages& prior, const std::string& wrong_answer,
                                    bool target_label) {
  if (prior.empty() || prior.back().role != Role::kUser) {
    throw PreconditionError("reflection needs a dialogue ending with the passage message");
  }
  std::string request = builtin_templates().reflection_text;
  const auto at = request.find(kTargetLabelPlaceholder);
  request.replace(at, kTargetLabelPlaceholder.size(), render_label(target_label));
  Messages messages = prior;
  messages.push_back({Role::kAssistant, wrong_answer});
  messages.push_back({Role::kUser, std::move(request)});
  return messages;
}

Messages assemble_modification_prompt(const Messages& reflection_dialogue) {
  if (reflection_dialogue.empty() || reflection_dialogue.back().role != Role::kAssistant) {
    throw PreconditionError("modification needs a dialogue ending with the model's rationale");
  }
  Messages messages = reflection_dialogue;
  messages.push_back({Role::kUser, builtin_templates().modification_text});
  return messages;
}

Instruction candidate_from_modification(std::string_view response) {
  return Instruction{trim(response), InstructionOrigin::kTuned};
}

}  // namespace iclopt
