#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace iclopt {

inline constexpr std::string_view kDefaultChatModel = "gpt-4o-mini-2024-07-18";
inline constexpr std::string_view kDefaultEmbeddingModel = "all-MiniLM-L6-v2";
inline constexpr int kDefaultEmbeddingDim = 384;
inline constexpr int kClassificationMaxTokens = 512;
inline constexpr int kRewriteMaxTokens = 2048;

enum class Role { kSystem, kUser, kAssistant };

std::string_view role_name(Role role) noexcept;
/// Transcript prefix used by the prompt listings: System / Human / AI.
std::string_view role_speaker(Role role) noexcept;
Role parse_role(std::string_view name);

struct ChatMessage {
  Role role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using Messages = std::vector<ChatMessage>;

struct ChatRequest {
  std::string model{kDefaultChatModel};
  Messages messages;
  double temperature = 0.0;
  int max_output_tokens = kClassificationMaxTokens;
};

/// Throws PreconditionError unless the request starts with exactly one system
/// message followed by alternating user/assistant turns ending with user, and
/// every message is non-empty.
void validate(const ChatRequest& request);

/// Stable content hash of (model, temperature, messages).
std::string fingerprint(const ChatRequest& request);

nlohmann::json messages_to_json(const Messages& messages);
Messages messages_from_json(const nlohmann::json& j);

/// Renders messages as a "System: / Human: / AI:" transcript, one turn per
/// line group, terminated by a newline.
std::string render_transcript(const Messages& messages);

struct CompletionResult {
  std::string text;
  bool from_cache = false;
  std::int64_t latency_ms = 0;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double l2_norm(const EmbeddingVector& v);
/// Scales to unit L2 norm. Throws PreconditionError on a zero vector.
void normalize(EmbeddingVector& v);

}  // namespace iclopt
