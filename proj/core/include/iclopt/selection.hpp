#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclopt/chat.hpp"
#include "iclopt/corpus.hpp"
#include "iclopt/prompting.hpp"

namespace iclopt {

class Gateway;

struct IndexEntry {
  std::string passage_id;
  bool label = false;
  EmbeddingVector vector;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

/// Unit-normalized embeddings of a training corpus, one entry per passage.
class EmbeddingIndex {
 public:
  /// Throws LoadError on empty input, duplicate ids, mixed dims, or a vector
  /// whose norm is more than 1e-6 away from 1.
  EmbeddingIndex(std::string source_corpus_name, std::string embedding_model,
                 std::vector<IndexEntry> entries);

  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& source_corpus_name() const noexcept { return corpus_; }
  const std::string& embedding_model() const noexcept { return model_; }

  friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

 private:
  std::string corpus_;
  std::string model_;
  std::vector<IndexEntry> entries_;
  std::size_t dim_ = 0;
};

/// Embeds every training passage through the gateway, in batches.
EmbeddingIndex build_index(const Corpus& train, Gateway& gateway);

/// JSONL sidecar: a header line {"corpus", "model", "dim"} followed by one
/// {"passage_id", "label", "vector"} record per entry.
void save_index(const EmbeddingIndex& index, const std::filesystem::path& path);
EmbeddingIndex load_index(const std::filesystem::path& path);

/// dot(u, v) / (|u| |v|). Throws PreconditionError on a dim mismatch or a
/// zero vector.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

enum class PolicyKind { kZeroShot, kStatic, kRandom, kSimilar };

std::string_view policy_name(PolicyKind kind) noexcept;
/// Display label used in result tables ("Zero-shot", "Static", ...).
std::string_view policy_label(PolicyKind kind) noexcept;
PolicyKind parse_policy(std::string_view name);

inline constexpr std::size_t kDefaultDemoCount = 5;
inline constexpr std::size_t kDefaultPerClassCap = 3;

struct SelectionPolicy {
  PolicyKind kind = PolicyKind::kZeroShot;
  std::vector<Demonstration> static_demos;
  std::size_t k = kDefaultDemoCount;
  std::size_t per_class_cap = kDefaultPerClassCap;
  std::uint64_t seed = 0;

  static SelectionPolicy zero_shot();
  static SelectionPolicy fixed(std::vector<Demonstration> demos);
  static SelectionPolicy random(std::size_t k, std::uint64_t seed);
  static SelectionPolicy similar(std::size_t k = kDefaultDemoCount,
                                 std::size_t per_class_cap = kDefaultPerClassCap);
};

/// Positions into `index.entries()` picked for a query, most similar first.
/// Entries are ranked by cosine to `query` (descending, ties by ascending
/// passage id); an entry is taken while its class has fewer than
/// `per_class_cap` picks and fewer than `k` are picked overall. Entries whose
/// passage text equals `target_text` are skipped.
std::vector<std::size_t> select_similar_indices(const EmbeddingVector& query, std::string_view target_text,
                                                const EmbeddingIndex& index, const Corpus& train,
                                                std::size_t k, std::size_t per_class_cap);

/// Everything `select` may need besides the policy and target.
struct SelectionContext {
  const Corpus* train = nullptr;
  const EmbeddingIndex* index = nullptr;
  Gateway* gateway = nullptr;  // embeds the target for similar selection
  std::uint64_t nonce = 0;     // evaluation run; varies random samples
};

/// Demonstrations for one target passage. Similar selections are ordered
/// most-similar-last so the closest example sits next to the target.
std::vector<Demonstration> select(const SelectionPolicy& policy, const Passage& target,
                                  const SelectionContext& context);

}  // namespace iclopt
