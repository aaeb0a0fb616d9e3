#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include "iclopt/chat.hpp"
#include "iclopt/random.hpp"

namespace iclopt {

/// Something that answers chat requests. Implementations report failures as
/// BackendError; the gateway decides what to retry.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Something that turns texts into vectors, one per text, in order.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
  virtual std::string model() const = 0;
};

struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
};

/// Content-addressed response store: in memory, optionally mirrored to one
/// file per key under a directory. Safe for concurrent use.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, const std::string& value);

 private:
  std::optional<std::filesystem::path> dir_;
  std::mutex mutex_;
  std::map<std::string, std::string> memory_;
};

struct CallOptions {
  /// Mixed into the cache key so that repeated runs reach the backend.
  std::optional<std::uint64_t> nonce;
  /// Skip the cache lookup (the fresh answer is still stored).
  bool bypass_cache = false;
};

struct GatewayOptions {
  RetryPolicy retry;
  bool cache_enabled = true;
  std::optional<std::filesystem::path> cache_dir;
  int max_in_flight = 8;
  std::uint64_t jitter_seed = 0;
  /// Used for retry backoff; tests replace it to avoid real sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
  std::uint64_t chat_attempts = 0;
  std::uint64_t chat_cache_hits = 0;
  std::uint64_t retries = 0;
  std::uint64_t embed_attempts = 0;
  std::uint64_t embed_cache_hits = 0;
};

/// Cache key for a request: its fingerprint, salted with the nonce if set.
std::string cache_key(const ChatRequest& request, std::optional<std::uint64_t> nonce);

/// Provider-agnostic access to chat completion and embedding with caching,
/// retries, and a bound on concurrent backend calls.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedder,
          GatewayOptions options = {});

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  CompletionResult complete(const ChatRequest& request, const CallOptions& options = {});

  /// Unit-normalized vectors, one per text. Every text must be non-empty.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);
  EmbeddingVector embed_one(const std::string& text);

  std::string embedding_model() const;
  bool has_embedder() const noexcept { return embedder_ != nullptr; }

  GatewayStats stats() const;

 private:
  template <typename Fn>
  auto with_retries(Fn&& fn) -> decltype(fn());

  std::shared_ptr<ChatBackend> chat_;
  std::shared_ptr<EmbeddingBackend> embedder_;
  GatewayOptions options_;
  ResponseCache chat_cache_;
  ResponseCache embed_cache_;
  std::counting_semaphore<> in_flight_;
  std::mutex rng_mutex_;
  Rng jitter_rng_;

  std::atomic<std::uint64_t> chat_attempts_{0};
  std::atomic<std::uint64_t> chat_cache_hits_{0};
  std::atomic<std::uint64_t> retries_{0};
  std::atomic<std::uint64_t> embed_attempts_{0};
  std::atomic<std::uint64_t> embed_cache_hits_{0};
};

}  // namespace iclopt
