#include "iclopt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/random.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt {

namespace {

using nlohmann::json;

constexpr const char* kFields[] = {"id", "report_id", "text", "label"};

std::optional<bool> parse_label_value(const json& value) {
  if (value.is_boolean()) return value.get<bool>();
  if (value.is_string()) {
    const std::string lowered = to_lower(trim(value.get<std::string>()));
    if (lowered == "true") return true;
    if (lowered == "false") return false;
  }
  return std::nullopt;
}

std::optional<bool> parse_label_text(std::string_view value) {
  const std::string lowered = to_lower(trim(value));
  if (lowered == "true") return true;
  if (lowered == "false") return false;
  return std::nullopt;
}

std::string strip_bom(std::string content) {
  if (content.size() >= 3 && content.compare(0, 3, "\xEF\xBB\xBF") == 0) content.erase(0, 3);
  return content;
}

struct Builder {
  std::vector<Passage> passages;
  std::set<std::string> seen;

  void add(std::size_t line, Passage p) {
    if (trim(p.text).empty()) throw LoadError(fmt::format("line {}: empty text", line));
    if (p.id.empty()) throw LoadError(fmt::format("line {}: empty id", line));
    if (!seen.insert(p.id).second) {
      throw LoadError(fmt::format("line {}: duplicate id {}", line, p.id));
    }
    passages.push_back(std::move(p));
  }
};

// One CSV record plus the physical line it started on.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRecord> parse_csv_records(const std::string& content) {
  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = content.size();
  while (i < n) {
    CsvRecord record;
    record.line = line;
    std::string field;
    bool end_of_record = false;
    while (!end_of_record) {
      if (i < n && content[i] == '"') {
        ++i;
        for (;;) {
          if (i >= n) {
            throw LoadError(fmt::format("line {}: unterminated quoted field", record.line));
          }
          const char c = content[i++];
          if (c == '"') {
            if (i < n && content[i] == '"') {
              field.push_back('"');
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
          }
        }
        if (i < n && content[i] != ',' && content[i] != '\n' && content[i] != '\r') {
          throw LoadError(fmt::format("line {}: malformed row: text after closing quote", line));
        }
      } else {
        while (i < n && content[i] != ',' && content[i] != '\n' && content[i] != '\r') {
          if (content[i] == '"') {
            throw LoadError(fmt::format("line {}: malformed row: stray quote", line));
          }
          field.push_back(content[i++]);
        }
      }
      record.fields.push_back(std::move(field));
      field.clear();
      if (i >= n) {
        end_of_record = true;
      } else if (content[i] == ',') {
        ++i;
      } else {
        if (content[i] == '\r') ++i;
        if (i < n && content[i] == '\n') ++i;
        ++line;
        end_of_record = true;
      }
    }
    const bool blank = record.fields.size() == 1 && record.fields[0].empty();
    if (!blank) records.push_back(std::move(record));
  }
  return records;
}

}  // namespace

Corpus::Corpus(std::string name, std::vector<Passage> passages)
    : name_(std::move(name)), passages_(std::move(passages)) {
  if (passages_.empty()) throw LoadError(fmt::format("corpus '{}' has no passages", name_));
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    const Passage& p = passages_[i];
    if (trim(p.text).empty()) throw LoadError(fmt::format("passage {} has empty text", p.id));
    if (!by_id_.emplace(p.id, i).second) throw LoadError(fmt::format("duplicate id {}", p.id));
  }
}

const Passage* Corpus::find(const std::string& id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &passages_[it->second];
}

std::vector<std::string> Corpus::report_ids() const {
  std::set<std::string> ids;
  for (const auto& p : passages_) ids.insert(p.report_id);
  return {ids.begin(), ids.end()};
}

CorpusFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = to_lower(path.extension().string());
  return ext == ".csv" ? CorpusFormat::kCsv : CorpusFormat::kJsonl;
}

Corpus parse_corpus_jsonl(std::string name, const std::string& raw) {
  const std::string content = strip_bom(raw);
  Builder builder;
  std::istringstream in(content);
  std::string line_text;
  std::size_t line = 0;
  while (std::getline(in, line_text)) {
    ++line;
    if (!line_text.empty() && line_text.back() == '\r') line_text.pop_back();
    if (trim(line_text).empty()) continue;
    json record;
    try {
      record = json::parse(line_text);
    } catch (const json::parse_error& e) {
      throw LoadError(fmt::format("line {}: malformed row: {}", line, e.what()));
    }
    if (!record.is_object()) throw LoadError(fmt::format("line {}: malformed row: not an object", line));
    for (const char* field : kFields) {
      if (!record.contains(field)) throw LoadError(fmt::format("line {}: missing field {}", line, field));
    }
    for (const auto& [key, _] : record.items()) {
      if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields)) {
        throw LoadError(fmt::format("line {}: unexpected field {}", line, key));
      }
    }
    for (const char* field : {"id", "report_id", "text"}) {
      if (!record[field].is_string()) {
        throw LoadError(fmt::format("line {}: field {} must be a string", line, field));
      }
    }
    const auto label = parse_label_value(record["label"]);
    if (!label) throw LoadError(fmt::format("line {}: invalid label", line));
    builder.add(line, Passage{record["id"].get<std::string>(), record["report_id"].get<std::string>(),
                              record["text"].get<std::string>(), *label});
  }
  if (builder.passages.empty()) throw LoadError(fmt::format("corpus '{}' has no passages", name));
  return Corpus(std::move(name), std::move(builder.passages));
}

Corpus parse_corpus_csv(std::string name, const std::string& raw) {
  const auto records = parse_csv_records(strip_bom(raw));
  if (records.empty()) throw LoadError("line 1: missing header row");
  const auto& header = records.front();
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    const std::string key = trim(header.fields[i]);
    if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields)) {
      throw LoadError(fmt::format("line {}: unexpected column {}", header.line, key));
    }
    if (!column.emplace(key, i).second) {
      throw LoadError(fmt::format("line {}: duplicate column {}", header.line, key));
    }
  }
  for (const char* field : kFields) {
    if (!column.contains(field)) {
      throw LoadError(fmt::format("line {}: missing field {}", header.line, field));
    }
  }
  Builder builder;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.fields.size()) {
      throw LoadError(fmt::format("line {}: malformed row: expected {} fields, got {}", rec.line,
                                  header.fields.size(), rec.fields.size()));
    }
    const auto label = parse_label_text(rec.fields[column["label"]]);
    if (!label) throw LoadError(fmt::format("line {}: invalid label", rec.line));
    builder.add(rec.line, Passage{rec.fields[column["id"]], rec.fields[column["report_id"]],
                                  rec.fields[column["text"]], *label});
  }
  if (builder.passages.empty()) throw LoadError(fmt::format("corpus '{}' has no passages", name));
  return Corpus(std::move(name), std::move(builder.passages));
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  std::string name = path.stem().string();
  return format == CorpusFormat::kCsv ? parse_corpus_csv(std::move(name), buffer.str())
                                      : parse_corpus_jsonl(std::move(name), buffer.str());
}

Corpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, format_from_path(path));
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& p : corpus) {
    nlohmann::ordered_json record;
    record["id"] = p.id;
    record["report_id"] = p.report_id;
    record["text"] = p.text;
    record["label"] = p.label;
    out += record.dump();
    out += '\n';
  }
  return out;
}

void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, to_jsonl(corpus));
}

SplitSpec SplitSpec::named(std::set<std::string> test_report_ids) {
  if (test_report_ids.empty()) throw PreconditionError("split: no test reports named");
  SplitSpec spec;
  spec.named_ = std::move(test_report_ids);
  return spec;
}

SplitSpec SplitSpec::sampled(std::size_t test_report_count, std::uint64_t seed) {
  if (test_report_count < 1) throw PreconditionError("split: test_report_count must be >= 1");
  SplitSpec spec;
  spec.count_ = test_report_count;
  spec.seed_ = seed;
  return spec;
}

Split split_by_report(const Corpus& corpus, const SplitSpec& spec) {
  const std::vector<std::string> reports = corpus.report_ids();
  std::set<std::string> test_reports;
  if (spec.is_named()) {
    for (const auto& id : spec.test_report_ids()) {
      if (!std::binary_search(reports.begin(), reports.end(), id)) {
        throw PreconditionError(fmt::format("split: test report '{}' not in corpus", id));
      }
    }
    test_reports = spec.test_report_ids();
  } else {
    if (spec.test_report_count() >= reports.size()) {
      throw PreconditionError(fmt::format("split: test_report_count {} must be below the {} reports",
                                          spec.test_report_count(), reports.size()));
    }
    Rng rng(spec.seed());
    for (std::size_t i : rng.sample_indices(reports.size(), spec.test_report_count())) {
      test_reports.insert(reports[i]);
    }
  }
  std::vector<Passage> train;
  std::vector<Passage> test;
  for (const auto& p : corpus) {
    (test_reports.contains(p.report_id) ? test : train).push_back(p);
  }
  if (test.empty()) throw PreconditionError("split: test set would be empty");
  if (train.empty()) throw PreconditionError("split: test set would equal the whole corpus");
  return Split{Corpus(corpus.name() + "-train", std::move(train)),
               Corpus(corpus.name() + "-test", std::move(test))};
}

ClassStats class_stats(const Corpus& corpus) {
  ClassStats stats;
  for (const auto& p : corpus) {
    ++stats.total;
    auto& rc = stats.per_report[p.report_id];
    ++rc.total;
    if (p.label) {
      ++stats.positives;
      ++rc.positives;
    }
  }
  stats.positive_rate = static_cast<double>(stats.positives) / static_cast<double>(stats.total);
  return stats;
}

}  // namespace iclopt
