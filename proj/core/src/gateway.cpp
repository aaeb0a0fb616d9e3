#include "iclopt/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/hashing.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  const auto path = *dir_ / key;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return std::nullopt;
  try {
    std::string value = read_file(path);
    std::lock_guard lock(mutex_);
    memory_.emplace(key, value);
    return value;
  } catch (const LoadError&) {
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const std::string& value) {
  {
    std::lock_guard lock(mutex_);
    memory_[key] = value;
  }
  if (dir_) write_file_atomic(*dir_ / key, value);
}

std::string cache_key(const ChatRequest& request, std::optional<std::uint64_t> nonce) {
  std::string fp = fingerprint(request);
  if (!nonce) return fp;
  return sha256_hex(fmt::format("{}:nonce={}", fp, *nonce));
}

namespace {

std::optional<std::filesystem::path> subdir(const std::optional<std::filesystem::path>& root,
                                            const char* name) {
  if (!root) return std::nullopt;
  return *root / name;
}

}  // namespace

Gateway::Gateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedder,
                 GatewayOptions options)
    : chat_(std::move(chat)),
      embedder_(std::move(embedder)),
      options_(std::move(options)),
      chat_cache_(subdir(options_.cache_dir, "chat")),
      embed_cache_(subdir(options_.cache_dir, "embeddings")),
      in_flight_(std::max(1, options_.max_in_flight)),
      jitter_rng_(options_.jitter_seed) {
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

template <typename Fn>
auto Gateway::with_retries(Fn&& fn) -> decltype(fn()) {
  for (int attempt = 0;; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      return fn();
    } catch (const BackendError& e) {
      if (!e.transient()) throw;
      if (attempt >= options_.retry.max_retries) {
        throw BackendError(BackendError::Kind::kPermanent, e.status(),
                           fmt::format("giving up after {} attempts: {}", attempt + 1, e.what()));
      }
    }
    ++retries_;
    const double exp = std::ldexp(static_cast<double>(options_.retry.base_delay.count()), attempt);
    const double capped = std::min(exp, static_cast<double>(options_.retry.max_delay.count()));
    double jitter;
    {
      std::lock_guard lock(rng_mutex_);
      jitter = 0.5 + 0.5 * jitter_rng_.uniform();
    }
    options_.sleep(std::chrono::milliseconds(static_cast<std::int64_t>(capped * jitter)));
  }
}

CompletionResult Gateway::complete(const ChatRequest& request, const CallOptions& call) {
  validate(request);
  if (!chat_) throw PreconditionError("gateway has no chat backend");
  const auto start = std::chrono::steady_clock::now();
  const std::string key = cache_key(request, call.nonce);
  if (options_.cache_enabled && !call.bypass_cache) {
    if (auto hit = chat_cache_.get(key)) {
      ++chat_cache_hits_;
      return CompletionResult{std::move(*hit), true, 0};
    }
  }
  std::string text = with_retries([&] {
    ++chat_attempts_;
    return chat_->complete(request);
  });
  if (options_.cache_enabled) chat_cache_.put(key, text);
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  return CompletionResult{std::move(text), false, elapsed.count()};
}

std::vector<EmbeddingVector> Gateway::embed(std::span<const std::string> texts) {
  if (!embedder_) throw PreconditionError("gateway has no embedding backend");
  if (texts.empty()) throw PreconditionError("embed: no texts given");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) throw PreconditionError(fmt::format("embed: text {} is empty", i));
  }
  const std::string model = embedder_->model();
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = sha256_hex(model + '\n' + sha256_hex(texts[i]));
    std::optional<std::string> hit;
    if (options_.cache_enabled) hit = embed_cache_.get(keys[i]);
    if (hit) {
      ++embed_cache_hits_;
      out[i].values = nlohmann::json::parse(*hit).get<std::vector<double>>();
    } else {
      missing.push_back(i);
    }
  }
  if (!missing.empty()) {
    std::vector<std::string> batch;
    batch.reserve(missing.size());
    for (std::size_t i : missing) batch.push_back(texts[i]);
    auto vectors = with_retries([&] {
      ++embed_attempts_;
      return embedder_->embed(batch);
    });
    if (vectors.size() != batch.size()) {
      throw BackendError(BackendError::Kind::kPermanent, 0,
                         fmt::format("embedder returned {} vectors for {} texts", vectors.size(),
                                     batch.size()));
    }
    for (std::size_t j = 0; j < missing.size(); ++j) {
      EmbeddingVector v = std::move(vectors[j]);
      normalize(v);
      if (options_.cache_enabled) embed_cache_.put(keys[missing[j]], nlohmann::json(v.values).dump());
      out[missing[j]] = std::move(v);
    }
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].dim() != out[0].dim()) throw BackendError(BackendError::Kind::kPermanent, 0, "embedding dims differ");
  }
  return out;
}

EmbeddingVector Gateway::embed_one(const std::string& text) {
  return embed(std::span<const std::string>(&text, 1)).front();
}

std::string Gateway::embedding_model() const {
  return embedder_ ? embedder_->model() : std::string();
}

GatewayStats Gateway::stats() const {
  return GatewayStats{chat_attempts_.load(), chat_cache_hits_.load(), retries_.load(),
                      embed_attempts_.load(), embed_cache_hits_.load()};
}

}  // namespace iclopt
