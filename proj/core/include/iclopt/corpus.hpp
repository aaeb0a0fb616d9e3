#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace iclopt {

/// One labeled text unit from a report. label == true means the passage
/// contains a relevant emission goal.
struct Passage {
  std::string id;
  std::string report_id;
  std::string text;
  bool label = false;

  friend bool operator==(const Passage&, const Passage&) = default;
};

/// An ordered, validated collection of passages. Immutable once built.
class Corpus {
 public:
  /// Throws LoadError if ids repeat, a text is blank, or `passages` is empty.
  Corpus(std::string name, std::vector<Passage> passages);

  const std::string& name() const noexcept { return name_; }
  const std::vector<Passage>& passages() const noexcept { return passages_; }
  std::size_t size() const noexcept { return passages_.size(); }
  const Passage& operator[](std::size_t i) const { return passages_[i]; }

  auto begin() const noexcept { return passages_.begin(); }
  auto end() const noexcept { return passages_.end(); }

  /// nullptr if absent.
  const Passage* find(const std::string& id) const;

  /// Distinct report ids in sorted order.
  std::vector<std::string> report_ids() const;

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.name_ == b.name_ && a.passages_ == b.passages_;
  }

 private:
  std::string name_;
  std::vector<Passage> passages_;
  std::map<std::string, std::size_t> by_id_;
};

enum class CorpusFormat { kJsonl, kCsv };

/// Guesses the format from the file extension (.csv, everything else JSONL).
CorpusFormat format_from_path(const std::filesystem::path& path);

/// Loads a corpus; the corpus name is the file stem. Errors name the 1-based
/// line number of the offending record.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& path);

Corpus parse_corpus_jsonl(std::string name, const std::string& content);
Corpus parse_corpus_csv(std::string name, const std::string& content);

std::string to_jsonl(const Corpus& corpus);
void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// Which reports form the test split: either named explicitly, or `count`
/// reports sampled deterministically from `seed`.
class SplitSpec {
 public:
  static SplitSpec named(std::set<std::string> test_report_ids);
  static SplitSpec sampled(std::size_t test_report_count, std::uint64_t seed);

  bool is_named() const noexcept { return !named_.empty(); }
  const std::set<std::string>& test_report_ids() const noexcept { return named_; }
  std::size_t test_report_count() const noexcept { return count_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::set<std::string> named_;
  std::size_t count_ = 0;
  std::uint64_t seed_ = 0;
};

struct Split {
  Corpus train;
  Corpus test;
};

/// Report-level split: every passage of a test report goes to `test`, the
/// rest to `train`. Record order is preserved within each side.
Split split_by_report(const Corpus& corpus, const SplitSpec& spec);

struct ReportCounts {
  std::size_t total = 0;
  std::size_t positives = 0;

  friend bool operator==(const ReportCounts&, const ReportCounts&) = default;
};

struct ClassStats {
  std::size_t total = 0;
  std::size_t positives = 0;
  double positive_rate = 0.0;
  std::map<std::string, ReportCounts> per_report;
};

ClassStats class_stats(const Corpus& corpus);

}  // namespace iclopt
