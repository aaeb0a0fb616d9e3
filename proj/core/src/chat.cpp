#include "iclopt/chat.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/hashing.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

std::string_view role_name(Role role) noexcept {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

std::string_view role_speaker(Role role) noexcept {
  switch (role) {
    case Role::kSystem: return "System";
    case Role::kUser: return "Human";
    case Role::kAssistant: return "AI";
  }
  return "Human";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw PreconditionError(fmt::format("unknown chat role '{}'", name));
}

void validate(const ChatRequest& request) {
  const auto& msgs = request.messages;
  if (msgs.size() < 2) throw PreconditionError("chat request needs a system and a user message");
  if (msgs.front().role != Role::kSystem) throw PreconditionError("chat request must begin with a system message");
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (msgs[i].content.empty()) throw PreconditionError(fmt::format("message {} is empty", i));
    if (i == 0) continue;
    const Role expected = (i % 2 == 1) ? Role::kUser : Role::kAssistant;
    if (msgs[i].role != expected) {
      throw PreconditionError(fmt::format("message {} should be {} but is {}", i, role_name(expected),
                                          role_name(msgs[i].role)));
    }
  }
  if (msgs.back().role != Role::kUser) throw PreconditionError("chat request must end with a user message");
  if (request.temperature < 0.0) throw PreconditionError("temperature must be >= 0");
  if (request.max_output_tokens <= 0) throw PreconditionError("max_output_tokens must be positive");
}

nlohmann::json messages_to_json(const Messages& messages) {
  auto arr = nlohmann::json::array();
  for (const auto& m : messages) {
    arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  return arr;
}

Messages messages_from_json(const nlohmann::json& j) {
  Messages out;
  for (const auto& m : j) {
    out.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  }
  return out;
}

std::string fingerprint(const ChatRequest& request) {
  nlohmann::json key = {
      {"model", request.model},
      {"temperature", request.temperature},
      {"messages", messages_to_json(request.messages)},
  };
  return sha256_hex(key.dump());
}

std::string render_transcript(const Messages& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += role_speaker(m.role);
    out += ": ";
    out += m.content;
    out += '\n';
  }
  return out;
}

double l2_norm(const EmbeddingVector& v) {
  double sum = 0.0;
  for (double x : v.values) sum += x * x;
  return std::sqrt(sum);
}

void normalize(EmbeddingVector& v) {
  const double norm = l2_norm(v);
  if (norm == 0.0) throw PreconditionError("cannot normalize a zero vector");
  for (double& x : v.values) x /= norm;
}

}  // namespace iclopt
