#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iclopt/gateway.hpp"

namespace iclopt {

/// OpenAI-compatible HTTP provider: POST {base_url}/chat/completions and
/// {base_url}/embeddings with a bearer credential. 429, 5xx and transport
/// failures are reported as transient, other 4xx as permanent.
class HttpBackend final : public ChatBackend, public EmbeddingBackend {
 public:
  struct Options {
    std::string base_url;
    std::string api_key;
    std::string embedding_model{kDefaultEmbeddingModel};
    std::chrono::seconds timeout{120};
  };

  explicit HttpBackend(Options options);

  std::string complete(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::string model() const override { return options_.embedding_model; }

 private:
  std::string post(const std::string& endpoint, const std::string& body);

  Options options_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. /v1
};

/// Deterministic embedder: lowercase, split on non-alphanumerics, add +1 at
/// fnv1a64(token) % dim for every token, then L2-normalize. A text without
/// tokens is hashed whole as a single token.
class MockHashEmbedder final : public EmbeddingBackend {
 public:
  explicit MockHashEmbedder(int dim = kDefaultEmbeddingDim);

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::string model() const override;
  int dim() const noexcept { return dim_; }

  EmbeddingVector embed_text(std::string_view text) const;

 private:
  int dim_;
};

std::vector<std::string> tokenize(std::string_view text);

/// One line of a scenario file. Exactly one matching rule is active.
struct ScenarioEntry {
  enum class Kind { kFingerprint, kTurn, kContains, kOrdered, kDefault };

  Kind kind = Kind::kOrdered;
  std::string fingerprint;
  std::size_t turn = 0;
  std::string user_contains;    // substring of the final user message
  std::string system_contains;  // substring of the system message
  std::vector<std::string> responses;
  bool sequential = false;  // "responses" list: consumed one per match
  std::size_t line = 0;
};

/// Canned-response chat backend driven by a JSONL scenario. Each line is
///   {"match": {...}, "response": "..."}   or   {"match": {...}, "responses": [...]}
/// with match one of {"fingerprint": hex}, {"turn": n}, {"default": true},
/// {"user_contains": s, "system_contains": s} (either key optional), or no
/// "match" at all for an ordered reply.
///
/// Resolution order per call: fingerprint, turn (0-based count of calls that
/// reached this backend), contains rules in file order, the ordered queue,
/// then default. A "responses" list is consumed one element per match.
/// Calls are serialized; ordered scripts are only meaningful single-threaded.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ScenarioEntry> entries);

  std::string complete(const ChatRequest& request) override;

  std::size_t calls() const;
  std::vector<ChatRequest> history() const;

 private:
  std::string take(std::size_t index);

  mutable std::mutex mutex_;
  std::vector<ScenarioEntry> entries_;
  std::vector<std::size_t> consumed_;
  std::size_t ordered_next_ = 0;
  std::vector<std::size_t> ordered_;
  std::size_t turn_ = 0;
  std::vector<ChatRequest> history_;
};

std::vector<ScenarioEntry> parse_scenario(const std::string& jsonl);
std::vector<ScenarioEntry> load_scenario(const std::filesystem::path& path);

enum class BackendKind { kHttp, kScripted, kMockEmbed };

std::string_view backend_kind_name(BackendKind kind) noexcept;
BackendKind parse_backend_kind(std::string_view name);

/// Provider settings. A run uses one config for chat (http | scripted) and
/// one for embeddings (http | mock_embed).
struct BackendConfig {
  BackendKind kind = BackendKind::kScripted;
  std::string base_url;
  std::string credential_env_var = "OPENAI_API_KEY";
  int retry_max = 5;
  int retry_base_delay_ms = 500;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> scenario_path;
  std::string model;  // embedding model name for http embedders
  int dim = kDefaultEmbeddingDim;
  int max_in_flight = 8;
  int timeout_s = 120;
};

/// Throws ConfigError if the kind's required fields are missing.
void validate(const BackendConfig& config);

std::shared_ptr<ChatBackend> make_chat_backend(const BackendConfig& config);
std::shared_ptr<EmbeddingBackend> make_embedding_backend(const BackendConfig& config);

/// Builds a gateway; retry/cache/parallelism settings come from `chat`.
std::unique_ptr<Gateway> make_gateway(const BackendConfig& chat, const BackendConfig& embedder);

}  // namespace iclopt
