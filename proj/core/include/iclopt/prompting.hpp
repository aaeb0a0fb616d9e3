#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclopt/chat.hpp"

namespace iclopt {

enum class InstructionOrigin { kBuiltinSimple, kBuiltinExpert, kTuned, kUser };

std::string_view origin_name(InstructionOrigin origin) noexcept;
InstructionOrigin parse_origin(std::string_view name);

/// The system-prompt text that defines the task; what the tuner rewrites.
struct Instruction {
  std::string text;
  InstructionOrigin origin = InstructionOrigin::kUser;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

/// A few-shot example: an input passage and its expected answer.
struct Demonstration {
  std::string input_text;
  bool label = false;

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

enum class LabelValue { kTrue, kFalse, kInvalid };

struct ParsedLabel {
  LabelValue value = LabelValue::kInvalid;
  std::string raw;

  bool valid() const noexcept { return value != LabelValue::kInvalid; }
  /// Only meaningful when valid().
  bool as_bool() const noexcept { return value == LabelValue::kTrue; }
};

/// "True" or "False", exactly as demonstrations answer.
std::string_view render_label(bool label) noexcept;

/// Trims whitespace, strips trailing . , ; : ! and lowercases. "true"/"false"
/// parse directly; otherwise the first whitespace-separated token (with the
/// same trailing punctuation stripped) decides. Anything else is invalid.
ParsedLabel parse_label(std::string_view raw);

/// [system: instruction] + per demo [user: input, assistant: True/False] +
/// [user: passage]. Demonstration order is preserved.
Messages assemble_classification_prompt(const Instruction& instruction,
                                        std::span<const Demonstration> demos,
                                        const std::string& passage_text);

/// Appends the model's wrong answer and the reflection request for
/// `target_label`. `prior` must end with the passage's user message.
Messages assemble_reflection_prompt(const Messages& prior, const std::string& wrong_answer,
                                    bool target_label);

/// Appends the modification request to a reflection dialogue that ends with
/// the model's rationale.
Messages assemble_modification_prompt(const Messages& reflection_dialogue);

/// The modification reply is the whole replacement instruction. Surrounding
/// whitespace is dropped; nothing else is touched.
Instruction candidate_from_modification(std::string_view response);

}  // namespace iclopt
