#include "iclopt/backends.hpp"

#include <cctype>
#include <cstdlib>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/hashing.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(Options options) : options_(std::move(options)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(options_.base_url, m, kUrl)) {
    throw ConfigError(fmt::format("invalid base_url '{}'", options_.base_url));
  }
  origin_ = m[1].str();
  path_prefix_ = m[2].matched ? m[2].str() : std::string();
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpBackend::post(const std::string& endpoint, const std::string& body) {
  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  client.set_bearer_token_auth(options_.api_key);
  auto res = client.Post(path_prefix_ + endpoint, body, "application/json");
  if (!res) {
    throw BackendError(BackendError::Kind::kTransient, 0,
                       fmt::format("POST {}{}: {}", origin_, endpoint, httplib::to_string(res.error())));
  }
  const int status = res->status;
  if (status >= 200 && status < 300) return res->body;
  const bool transient = status == 429 || status == 408 || status >= 500;
  throw BackendError(transient ? BackendError::Kind::kTransient : BackendError::Kind::kPermanent, status,
                     fmt::format("POST {}{} returned HTTP {}: {}", origin_, endpoint, status,
                                 res->body.substr(0, 500)));
}

std::string HttpBackend::complete(const ChatRequest& request) {
  const json body = {
      {"model", request.model},
      {"messages", messages_to_json(request.messages)},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };
  const std::string raw = post("/chat/completions", body.dump());
  try {
    const json reply = json::parse(raw);
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(BackendError::Kind::kPermanent, 200,
                       fmt::format("unexpected chat completion payload: {}", e.what()));
  }
}

std::vector<EmbeddingVector> HttpBackend::embed(std::span<const std::string> texts) {
  const json body = {{"model", options_.embedding_model},
                     {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const std::string raw = post("/embeddings", body.dump());
  try {
    const json reply = json::parse(raw);
    std::vector<EmbeddingVector> out(texts.size());
    for (const auto& item : reply.at("data")) {
      const auto index = item.at("index").get<std::size_t>();
      if (index >= out.size()) throw BackendError(BackendError::Kind::kPermanent, 200, "embedding index out of range");
      out[index].values = item.at("embedding").get<std::vector<double>>();
    }
    return out;
  } catch (const json::exception& e) {
    throw BackendError(BackendError::Kind::kPermanent, 200,
                       fmt::format("unexpected embeddings payload: {}", e.what()));
  }
}

// ---------------------------------------------------------------------------
// Mock embedder

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

MockHashEmbedder::MockHashEmbedder(int dim) : dim_(dim) {
  if (dim <= 0) throw ConfigError("mock embedder dim must be positive");
}

std::string MockHashEmbedder::model() const { return fmt::format("mock-hash-{}", dim_); }

EmbeddingVector MockHashEmbedder::embed_text(std::string_view text) const {
  EmbeddingVector v;
  v.values.assign(static_cast<std::size_t>(dim_), 0.0);
  auto tokens = tokenize(text);
  if (tokens.empty()) tokens.emplace_back(text);
  for (const auto& t : tokens) v.values[fnv1a64(t) % static_cast<std::uint64_t>(dim_)] += 1.0;
  normalize(v);
  return v;
}

std::vector<EmbeddingVector> MockHashEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

// ---------------------------------------------------------------------------
// Scripted

std::vector<ScenarioEntry> parse_scenario(const std::string& content) {
  std::vector<ScenarioEntry> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const std::size_t nl = content.find('\n', pos);
    std::string line = content.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? content.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ScenarioError(fmt::format("scenario line {}: {}", line_no, e.what()));
    }
    if (!j.is_object()) throw ScenarioError(fmt::format("scenario line {}: not an object", line_no));
    ScenarioEntry entry;
    entry.line = line_no;
    try {
      if (j.contains("responses")) {
        entry.responses = j.at("responses").get<std::vector<std::string>>();
        entry.sequential = true;
        if (entry.responses.empty()) throw ScenarioError(fmt::format("scenario line {}: empty responses", line_no));
      } else if (j.contains("response")) {
        entry.responses.push_back(j.at("response").get<std::string>());
      } else {
        throw ScenarioError(fmt::format("scenario line {}: missing response", line_no));
      }
      if (!j.contains("match")) {
        entry.kind = ScenarioEntry::Kind::kOrdered;
      } else {
        const json& m = j.at("match");
        if (!m.is_object()) throw ScenarioError(fmt::format("scenario line {}: match must be an object", line_no));
        if (m.contains("fingerprint")) {
          entry.kind = ScenarioEntry::Kind::kFingerprint;
          entry.fingerprint = m.at("fingerprint").get<std::string>();
        } else if (m.contains("turn")) {
          entry.kind = ScenarioEntry::Kind::kTurn;
          entry.turn = m.at("turn").get<std::size_t>();
        } else if (m.contains("default")) {
          entry.kind = ScenarioEntry::Kind::kDefault;
        } else if (m.contains("user_contains") || m.contains("system_contains")) {
          entry.kind = ScenarioEntry::Kind::kContains;
          entry.user_contains = m.value("user_contains", "");
          entry.system_contains = m.value("system_contains", "");
        } else {
          throw ScenarioError(fmt::format("scenario line {}: unknown match rule", line_no));
        }
      }
    } catch (const json::exception& e) {
      throw ScenarioError(fmt::format("scenario line {}: {}", line_no, e.what()));
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ScenarioEntry> load_scenario(const std::filesystem::path& path) {
  std::string content;
  try {
    content = read_file(path);
  } catch (const LoadError& e) {
    throw ScenarioError(e.what());
  }
  return parse_scenario(content);
}

ScriptedBackend::ScriptedBackend(std::vector<ScenarioEntry> entries)
    : entries_(std::move(entries)), consumed_(entries_.size(), 0) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].kind == ScenarioEntry::Kind::kOrdered) ordered_.push_back(i);
  }
}

std::string ScriptedBackend::take(std::size_t index) {
  ScenarioEntry& e = entries_[index];
  if (!e.sequential && e.kind != ScenarioEntry::Kind::kOrdered) return e.responses.front();
  const std::size_t slot = consumed_[index]++;
  if (e.kind == ScenarioEntry::Kind::kOrdered && !e.sequential) return e.responses.front();
  if (slot >= e.responses.size()) {
    throw ScenarioExhausted(fmt::format("scenario line {}: all {} responses used", e.line, e.responses.size()));
  }
  return e.responses[slot];
}

std::string ScriptedBackend::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  const std::size_t turn = turn_++;
  history_.push_back(request);
  const std::string fp = fingerprint(request);
  const std::string& system = request.messages.front().content;
  const std::string& last_user = request.messages.back().content;

  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.kind == ScenarioEntry::Kind::kFingerprint && e.fingerprint == fp) return take(i);
  }
  std::optional<std::size_t> max_turn;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.kind != ScenarioEntry::Kind::kTurn) continue;
    if (e.turn == turn) return take(i);
    max_turn = std::max(max_turn.value_or(0), e.turn);
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.kind != ScenarioEntry::Kind::kContains) continue;
    const bool user_ok = e.user_contains.empty() || last_user.find(e.user_contains) != std::string::npos;
    const bool system_ok = e.system_contains.empty() || system.find(e.system_contains) != std::string::npos;
    if (user_ok && system_ok) return take(i);
  }
  if (ordered_next_ < ordered_.size()) return take(ordered_[ordered_next_++]);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].kind == ScenarioEntry::Kind::kDefault) return take(i);
  }
  if (!ordered_.empty()) {
    throw ScenarioExhausted(fmt::format("scenario exhausted: call {} after {} ordered replies", turn + 1,
                                        ordered_.size()));
  }
  if (max_turn && turn > *max_turn) {
    throw ScenarioExhausted(fmt::format("scenario exhausted: no reply scripted for turn {}", turn));
  }
  throw ScenarioError(fmt::format("no scenario entry matches request {} (turn {})", fp, turn));
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return turn_;
}

std::vector<ChatRequest> ScriptedBackend::history() const {
  std::lock_guard lock(mutex_);
  return history_;
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view backend_kind_name(BackendKind kind) noexcept {
  switch (kind) {
    case BackendKind::kHttp: return "http";
    case BackendKind::kScripted: return "scripted";
    case BackendKind::kMockEmbed: return "mock_embed";
  }
  return "http";
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "http") return BackendKind::kHttp;
  if (name == "scripted") return BackendKind::kScripted;
  if (name == "mock_embed") return BackendKind::kMockEmbed;
  throw ConfigError(fmt::format("unknown backend kind '{}'", name));
}

void validate(const BackendConfig& config) {
  if (config.kind == BackendKind::kHttp) {
    if (config.base_url.empty()) throw ConfigError("http backend requires base_url");
    if (config.credential_env_var.empty()) throw ConfigError("http backend requires credential_env_var");
  }
  if (config.kind == BackendKind::kScripted && !config.scenario_path) {
    throw ConfigError("scripted backend requires scenario_path");
  }
  if (config.retry_max < 0) throw ConfigError("retry_max must be >= 0");
  if (config.retry_base_delay_ms < 0) throw ConfigError("retry_base_delay_ms must be >= 0");
  if (config.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (config.dim < 1) throw ConfigError("dim must be >= 1");
}

namespace {

std::shared_ptr<HttpBackend> make_http(const BackendConfig& config) {
  const char* key = std::getenv(config.credential_env_var.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError(fmt::format("environment variable {} is not set", config.credential_env_var));
  }
  HttpBackend::Options options;
  options.base_url = config.base_url;
  options.api_key = key;
  if (!config.model.empty()) options.embedding_model = config.model;
  options.timeout = std::chrono::seconds(config.timeout_s);
  return std::make_shared<HttpBackend>(std::move(options));
}

}  // namespace

std::shared_ptr<ChatBackend> make_chat_backend(const BackendConfig& config) {
  validate(config);
  switch (config.kind) {
    case BackendKind::kHttp: return make_http(config);
    case BackendKind::kScripted: return std::make_shared<ScriptedBackend>(load_scenario(*config.scenario_path));
    case BackendKind::kMockEmbed: break;
  }
  throw ConfigError("mock_embed is not a chat backend");
}

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const BackendConfig& config) {
  validate(config);
  switch (config.kind) {
    case BackendKind::kHttp: return make_http(config);
    case BackendKind::kMockEmbed: return std::make_shared<MockHashEmbedder>(config.dim);
    case BackendKind::kScripted: break;
  }
  throw ConfigError("scripted is not an embedding backend");
}

std::unique_ptr<Gateway> make_gateway(const BackendConfig& chat, const BackendConfig& embedder) {
  GatewayOptions options;
  options.retry.max_retries = chat.retry_max;
  options.retry.base_delay = std::chrono::milliseconds(chat.retry_base_delay_ms);
  options.cache_dir = chat.cache_dir;
  options.max_in_flight = chat.max_in_flight;
  return std::make_unique<Gateway>(make_chat_backend(chat), make_embedding_backend(embedder), std::move(options));
}

}  // namespace iclopt
