#include "iclopt/templates.hpp"

#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

std::string_view template_asset(std::string_view name) {
  for (const auto& asset : detail::embedded_assets()) {
    if (asset.name == name) return asset.content;
  }
  throw PreconditionError(fmt::format("unknown template asset '{}'", name));
}

std::vector<std::string_view> template_asset_names() {
  std::vector<std::string_view> names;
  for (const auto& asset : detail::embedded_assets()) names.push_back(asset.name);
  return names;
}

namespace {

BuiltinTemplates load_builtin() {
  BuiltinTemplates t;
  t.simple = {std::string(template_asset("simple_instruction.txt")), InstructionOrigin::kBuiltinSimple};
  t.expert = {std::string(template_asset("expert_instruction.txt")), InstructionOrigin::kBuiltinExpert};
  t.reflection_text = std::string(template_asset("reflection_request.txt"));
  t.modification_text = std::string(template_asset("modification_request.txt"));
  std::istringstream in{std::string(template_asset("static_demos.jsonl"))};
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    t.static_demos.push_back({j.at("input_text").get<std::string>(), j.at("label").get<bool>()});
  }
  return t;
}

}  // namespace

const BuiltinTemplates& builtin_templates() {
  static const BuiltinTemplates templates = load_builtin();
  return templates;
}

}  // namespace iclopt
