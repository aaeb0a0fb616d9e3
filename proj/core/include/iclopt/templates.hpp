#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclopt/prompting.hpp"

namespace iclopt {

/// Placeholder in the reflection request replaced by "True" or "False".
inline constexpr std::string_view kTargetLabelPlaceholder = "<target label>";

struct BuiltinTemplates {
  Instruction simple;
  Instruction expert;
  std::vector<Demonstration> static_demos;
  std::string reflection_text;    // contains kTargetLabelPlaceholder
  std::string modification_text;
};

/// The shipped instructions, static demonstrations and tuning requests,
/// parsed once from the embedded asset files.
const BuiltinTemplates& builtin_templates();

/// Raw content of an embedded asset (e.g. "simple_instruction.txt").
/// Throws PreconditionError for unknown names.
std::string_view template_asset(std::string_view name);
std::vector<std::string_view> template_asset_names();

namespace detail {
struct EmbeddedAsset {
  std::string_view name;
  std::string_view content;
};
std::span<const EmbeddedAsset> embedded_assets();
}  // namespace detail

}  // namespace iclopt
