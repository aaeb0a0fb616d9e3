#include "iclopt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/gateway.hpp"
#include "iclopt/hashing.hpp"
#include "iclopt/random.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

namespace {
constexpr double kNormTolerance = 1e-6;
constexpr std::size_t kEmbedBatch = 64;
}  // namespace

EmbeddingIndex::EmbeddingIndex(std::string source_corpus_name, std::string embedding_model,
                               std::vector<IndexEntry> entries)
    : corpus_(std::move(source_corpus_name)), model_(std::move(embedding_model)), entries_(std::move(entries)) {
  if (entries_.empty()) throw LoadError("embedding index is empty");
  dim_ = entries_.front().vector.dim();
  if (dim_ == 0) throw LoadError("embedding index has zero-dimensional vectors");
  std::set<std::string> ids;
  for (const auto& e : entries_) {
    if (!ids.insert(e.passage_id).second) throw LoadError(fmt::format("index: duplicate passage id {}", e.passage_id));
    if (e.vector.dim() != dim_) {
      throw LoadError(fmt::format("index: passage {} has dim {}, expected {}", e.passage_id, e.vector.dim(), dim_));
    }
    if (std::abs(l2_norm(e.vector) - 1.0) > kNormTolerance) {
      throw LoadError(fmt::format("index: vector of passage {} is not unit length", e.passage_id));
    }
  }
}

EmbeddingIndex build_index(const Corpus& train, Gateway& gateway) {
  std::vector<IndexEntry> entries;
  entries.reserve(train.size());
  for (std::size_t start = 0; start < train.size(); start += kEmbedBatch) {
    const std::size_t stop = std::min(train.size(), start + kEmbedBatch);
    std::vector<std::string> texts;
    for (std::size_t i = start; i < stop; ++i) texts.push_back(train[i].text);
    auto vectors = gateway.embed(texts);
    for (std::size_t i = start; i < stop; ++i) {
      entries.push_back({train[i].id, train[i].label, std::move(vectors[i - start])});
    }
  }
  return EmbeddingIndex(train.name(), gateway.embedding_model(), std::move(entries));
}

void save_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
  std::string out;
  nlohmann::ordered_json header;
  header["corpus"] = index.source_corpus_name();
  header["model"] = index.embedding_model();
  header["dim"] = index.dim();
  out += header.dump() + '\n';
  for (const auto& e : index.entries()) {
    nlohmann::ordered_json record;
    record["passage_id"] = e.passage_id;
    record["label"] = e.label;
    record["vector"] = e.vector.values;
    out += record.dump() + '\n';
  }
  write_file_atomic(path, out);
}

EmbeddingIndex load_index(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  std::optional<nlohmann::json> header;
  std::vector<IndexEntry> entries;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line);
      if (!header) {
        header = std::move(j);
        continue;
      }
      entries.push_back({j.at("passage_id").get<std::string>(), j.at("label").get<bool>(),
                         EmbeddingVector{j.at("vector").get<std::vector<double>>()}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("{}: line {}: {}", path.string(), line_no, e.what()));
  }
  if (!header) throw LoadError(fmt::format("{}: missing index header", path.string()));
  EmbeddingIndex index(header->value("corpus", ""), header->value("model", ""), std::move(entries));
  if (header->value("dim", std::size_t{0}) != index.dim()) {
    throw LoadError(fmt::format("{}: header dim does not match vectors", path.string()));
  }
  return index;
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) throw PreconditionError(fmt::format("cosine: dim {} vs {}", u.dim(), v.dim()));
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) {
    dot += u.values[i] * v.values[i];
    uu += u.values[i] * u.values[i];
    vv += v.values[i] * v.values[i];
  }
  if (uu == 0.0 || vv == 0.0) throw PreconditionError("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

std::string_view policy_name(PolicyKind kind) noexcept {
  switch (kind) {
    case PolicyKind::kZeroShot: return "zero_shot";
    case PolicyKind::kStatic: return "static";
    case PolicyKind::kRandom: return "random";
    case PolicyKind::kSimilar: return "similar";
  }
  return "zero_shot";
}

std::string_view policy_label(PolicyKind kind) noexcept {
  switch (kind) {
    case PolicyKind::kZeroShot: return "Zero-shot";
    case PolicyKind::kStatic: return "Static";
    case PolicyKind::kRandom: return "Random";
    case PolicyKind::kSimilar: return "Similar";
  }
  return "Zero-shot";
}

PolicyKind parse_policy(std::string_view name) {
  if (name == "zero_shot" || name == "zero-shot") return PolicyKind::kZeroShot;
  if (name == "static") return PolicyKind::kStatic;
  if (name == "random") return PolicyKind::kRandom;
  if (name == "similar") return PolicyKind::kSimilar;
  throw ConfigError(fmt::format("unknown selection policy '{}'", name));
}

SelectionPolicy SelectionPolicy::zero_shot() { return {}; }

SelectionPolicy SelectionPolicy::fixed(std::vector<Demonstration> demos) {
  SelectionPolicy p;
  p.kind = PolicyKind::kStatic;
  p.static_demos = std::move(demos);
  return p;
}

SelectionPolicy SelectionPolicy::random(std::size_t k, std::uint64_t seed) {
  SelectionPolicy p;
  p.kind = PolicyKind::kRandom;
  p.k = k;
  p.seed = seed;
  return p;
}

SelectionPolicy SelectionPolicy::similar(std::size_t k, std::size_t per_class_cap) {
  SelectionPolicy p;
  p.kind = PolicyKind::kSimilar;
  p.k = k;
  p.per_class_cap = per_class_cap;
  return p;
}

std::vector<std::size_t> select_similar_indices(const EmbeddingVector& query, std::string_view target_text,
                                                const EmbeddingIndex& index, const Corpus& train,
                                                std::size_t k, std::size_t per_class_cap) {
  const auto& entries = index.entries();
  std::vector<double> sims(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) sims[i] = cosine(query, entries[i].vector);
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return entries[a].passage_id < entries[b].passage_id;
  });

  std::vector<std::size_t> picked;
  std::size_t per_class[2] = {0, 0};
  for (std::size_t i : order) {
    if (picked.size() >= k) break;
    const IndexEntry& e = entries[i];
    std::size_t& count = per_class[e.label ? 1 : 0];
    if (count >= per_class_cap) continue;
    const Passage* p = train.find(e.passage_id);
    if (p == nullptr) {
      throw PreconditionError(fmt::format("index passage {} is not in the training corpus", e.passage_id));
    }
    if (p->text == target_text) continue;
    ++count;
    picked.push_back(i);
  }
  return picked;
}

std::vector<Demonstration> select(const SelectionPolicy& policy, const Passage& target,
                                  const SelectionContext& context) {
  switch (policy.kind) {
    case PolicyKind::kZeroShot:
      return {};
    case PolicyKind::kStatic:
      return policy.static_demos;
    case PolicyKind::kRandom: {
      if (context.train == nullptr) throw PreconditionError("random selection needs a training corpus");
      const Corpus& train = *context.train;
      if (policy.k > train.size()) {
        throw PreconditionError(fmt::format("random selection: k={} exceeds the {} training passages", policy.k,
                                            train.size()));
      }
      Rng rng(mix_seed(mix_seed(policy.seed, context.nonce), fnv1a64(target.id)));
      std::vector<Demonstration> demos;
      for (std::size_t i : rng.sample_indices(train.size(), policy.k)) {
        demos.push_back({train[i].text, train[i].label});
      }
      return demos;
    }
    case PolicyKind::kSimilar: {
      if (context.index == nullptr) throw PreconditionError("similar selection needs an embedding index");
      if (context.train == nullptr) throw PreconditionError("similar selection needs a training corpus");
      if (context.gateway == nullptr) throw PreconditionError("similar selection needs an embedder");
      if (context.index->size() == 0) throw PreconditionError("similar selection: empty index");
      const EmbeddingVector query = context.gateway->embed_one(target.text);
      const auto picked = select_similar_indices(query, target.text, *context.index, *context.train, policy.k,
                                                 policy.per_class_cap);
      std::vector<Demonstration> demos;
      demos.reserve(picked.size());
      for (auto it = picked.rbegin(); it != picked.rend(); ++it) {
        const IndexEntry& e = context.index->entries()[*it];
        demos.push_back({context.train->find(e.passage_id)->text, e.label});
      }
      return demos;
    }
  }
  return {};
}

}  // namespace iclopt
