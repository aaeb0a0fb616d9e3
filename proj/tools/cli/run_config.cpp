#include "cli/run_config.hpp"

#include <set>

#include <fmt/format.h>

#include "iclopt/error.hpp"
#include "iclopt/hashing.hpp"
#include "iclopt/templates.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt::cli {

using nlohmann::json;

GenerationSettings RunConfig::generation() const {
  GenerationSettings g;
  g.model = model;
  g.temperature = temperature;
  return g;
}

Clock RunConfig::clock() const { return timestamps == TimestampMode::kLogical ? logical_clock() : wall_clock(); }

json load_config_json(const std::filesystem::path& path) {
  std::string content;
  try {
    content = read_file(path);
  } catch (const LoadError& e) {
    throw ConfigError(e.what());
  }
  try {
    return json::parse(content, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void set_key(json& config, const std::string& dotted_key, json value) {
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

namespace {

// Reads fields out of one config object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (j.is_null()) {
      j_ = json::object();
    } else if (!j.is_object()) {
      throw ConfigError(fmt::format("config: '{}' must be an object", name_));
    } else {
      j_ = j;
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("config: {}{}: {}", prefix(), key, e.what()));
    }
  }

  template <typename T>
  std::optional<T> get_optional(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return get<T>(key, T{});
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : json(), prefix() + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(fmt::format("config: unknown key '{}{}'", prefix(), key));
    }
  }

 private:
  std::string prefix() const { return name_.empty() ? std::string() : name_ + "."; }

  json j_;
  std::string name_;
  std::set<std::string> seen_;
};

BackendConfig read_backend(Section s, BackendKind fallback) {
  BackendConfig b;
  b.kind = parse_backend_kind(s.get<std::string>("kind", std::string(backend_kind_name(fallback))));
  b.base_url = s.get<std::string>("base_url", "");
  b.credential_env_var = s.get<std::string>("credential_env_var", b.credential_env_var);
  b.retry_max = s.get<int>("retry_max", b.retry_max);
  b.retry_base_delay_ms = s.get<int>("retry_base_delay_ms", b.retry_base_delay_ms);
  if (auto dir = s.get_optional<std::string>("cache_dir")) b.cache_dir = *dir;
  if (auto p = s.get_optional<std::string>("scenario_path")) b.scenario_path = *p;
  b.model = s.get<std::string>("model", b.kind == BackendKind::kHttp ? std::string(kDefaultEmbeddingModel) : "");
  b.dim = s.get<int>("dim", b.dim);
  b.max_in_flight = s.get<int>("max_in_flight", b.max_in_flight);
  b.timeout_s = s.get<int>("timeout_s", b.timeout_s);
  s.finish();
  return b;
}

InstructionOrigin parse_matrix_instruction(const std::string& name) {
  if (name == "simple") return InstructionOrigin::kBuiltinSimple;
  if (name == "expert") return InstructionOrigin::kBuiltinExpert;
  throw ConfigError(fmt::format("config: matrix instruction must be simple or expert, got '{}'", name));
}

std::string matrix_instruction_name(InstructionOrigin origin) {
  return origin == InstructionOrigin::kBuiltinExpert ? "expert" : "simple";
}

std::optional<std::string> path_string(const std::optional<std::filesystem::path>& p) {
  if (!p) return std::nullopt;
  return p->string();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json();
}

}  // namespace

RunConfig resolve(const json& config) {
  RunConfig rc;
  Section root(config, "");
  rc.seed = root.get<std::uint64_t>("seed", 0);

  {
    Section c = root.child("corpus");
    if (auto p = c.get_optional<std::string>("path")) rc.corpus.path = *p;
    if (auto p = c.get_optional<std::string>("train")) rc.corpus.train = *p;
    if (auto p = c.get_optional<std::string>("test")) rc.corpus.test = *p;
    Section split = c.child("split");
    rc.corpus.test_reports = split.get<std::vector<std::string>>("test_reports", {});
    rc.corpus.test_report_count = split.get_optional<std::size_t>("test_report_count");
    rc.corpus.split_seed = split.get<std::uint64_t>("seed", rc.seed);
    split.finish();
    c.finish();
    if (!rc.corpus.test_reports.empty() && rc.corpus.test_report_count) {
      throw ConfigError("config: set either corpus.split.test_reports or corpus.split.test_report_count, not both");
    }
  }

  rc.backend = read_backend(root.child("backend"), BackendKind::kScripted);
  if (rc.backend.kind == BackendKind::kMockEmbed) throw ConfigError("config: backend.kind must be http or scripted");
  rc.embedder = read_backend(root.child("embedder"), BackendKind::kMockEmbed);
  if (rc.embedder.kind == BackendKind::kScripted) throw ConfigError("config: embedder.kind must be http or mock_embed");

  rc.model = root.get<std::string>("model", rc.model);
  rc.temperature = root.get<double>("temperature", rc.temperature);
  rc.instruction = root.get<std::string>("instruction", rc.instruction);
  if (auto p = root.get_optional<std::string>("index_path")) rc.index_path = *p;
  rc.repeats = root.get<std::size_t>("repeats", rc.repeats);
  rc.parallelism = root.get<std::size_t>("parallelism", rc.parallelism);
  rc.output_dir = root.get<std::string>("output_dir", rc.output_dir.string());

  {
    Section p = root.child("policy");
    rc.policy.kind = parse_policy(p.get<std::string>("kind", "zero_shot"));
    rc.policy.k = p.get<std::size_t>("k", kDefaultDemoCount);
    rc.policy.per_class_cap = p.get<std::size_t>("per_class_cap", kDefaultPerClassCap);
    rc.policy.seed = p.get<std::uint64_t>("seed", rc.seed);
    p.finish();
    if (rc.policy.kind == PolicyKind::kStatic) rc.policy.static_demos = builtin_templates().static_demos;
  }

  {
    Section t = root.child("tuner");
    rc.tuner.epsilon = t.get<double>("epsilon", kDefaultEpsilon);
    rc.tuner.seed = t.get<std::uint64_t>("seed", rc.seed);
    rc.tuner.max_epochs = t.get<std::size_t>("max_epochs", 1);
    rc.tuner.max_candidate_evals = t.get_optional<std::size_t>("max_candidate_evals");
    rc.tuner.demos_during_tuning = parse_policy(t.get<std::string>("demos_during_tuning", "zero_shot"));
    rc.tuner.scoring_repeats = t.get<std::size_t>("scoring_repeats", 1);
    rc.tuner.instruction_char_cap = t.get<std::size_t>("instruction_char_cap", kDefaultInstructionCharCap);
    t.finish();
  }

  {
    Section m = root.child("matrix");
    if (auto names = m.get_optional<std::vector<std::string>>("instructions")) {
      rc.matrix.instructions.clear();
      for (const auto& n : *names) rc.matrix.instructions.push_back(parse_matrix_instruction(n));
    }
    if (auto names = m.get_optional<std::vector<std::string>>("strategies")) {
      rc.matrix.strategies.clear();
      for (const auto& n : *names) rc.matrix.strategies.push_back(parse_policy(n));
    }
    if (auto names = m.get_optional<std::vector<std::string>>("tuning_demos")) {
      rc.matrix.tuning_demos.clear();
      for (const auto& n : *names) rc.matrix.tuning_demos.push_back(parse_policy(n));
    }
    rc.matrix.tuned = m.get<bool>("tuned", true);
    m.finish();
  }

  const std::string default_ts = rc.backend.kind == BackendKind::kScripted ? "logical" : "wall";
  const std::string ts = root.get<std::string>("timestamps", default_ts);
  if (ts == "logical") {
    rc.timestamps = TimestampMode::kLogical;
  } else if (ts == "wall") {
    rc.timestamps = TimestampMode::kWall;
  } else {
    throw ConfigError(fmt::format("config: timestamps must be wall or logical, got '{}'", ts));
  }
  root.finish();

  rc.tuner.parallelism = rc.parallelism;
  rc.tuner.generation = rc.generation();
  validate(rc.tuner);
  for (PolicyKind k : rc.matrix.tuning_demos) {
    if (k != PolicyKind::kZeroShot && k != PolicyKind::kStatic) {
      throw ConfigError("config: matrix.tuning_demos may only contain zero_shot and static");
    }
  }
  if (rc.repeats < 1) throw ConfigError("config: repeats must be >= 1");
  if (rc.parallelism < 1) throw ConfigError("config: parallelism must be >= 1");
  if (rc.temperature < 0.0) throw ConfigError("config: temperature must be >= 0");
  if (rc.policy.k < 1 || rc.policy.per_class_cap < 1) throw ConfigError("config: policy.k and per_class_cap must be >= 1");
  return rc;
}

nlohmann::ordered_json to_json(const RunConfig& rc) {
  nlohmann::ordered_json j;
  j["seed"] = rc.seed;
  j["corpus"] = {{"path", path_string(rc.corpus.path).value_or("")},
                 {"train", path_string(rc.corpus.train).value_or("")},
                 {"test", path_string(rc.corpus.test).value_or("")},
                 {"split",
                  {{"test_reports", rc.corpus.test_reports},
                   {"test_report_count", optional_json(rc.corpus.test_report_count)},
                   {"seed", rc.corpus.split_seed}}}};
  const auto backend_json = [](const BackendConfig& b) {
    nlohmann::ordered_json o;
    o["kind"] = backend_kind_name(b.kind);
    o["base_url"] = b.base_url;
    o["credential_env_var"] = b.credential_env_var;
    o["retry_max"] = b.retry_max;
    o["retry_base_delay_ms"] = b.retry_base_delay_ms;
    o["cache_dir"] = optional_json(path_string(b.cache_dir));
    o["scenario_path"] = optional_json(path_string(b.scenario_path));
    o["model"] = b.model;
    o["dim"] = b.dim;
    o["max_in_flight"] = b.max_in_flight;
    o["timeout_s"] = b.timeout_s;
    return o;
  };
  j["backend"] = backend_json(rc.backend);
  j["embedder"] = backend_json(rc.embedder);
  j["model"] = rc.model;
  j["temperature"] = rc.temperature;
  j["instruction"] = rc.instruction;
  j["policy"] = {{"kind", policy_name(rc.policy.kind)},
                 {"k", rc.policy.k},
                 {"per_class_cap", rc.policy.per_class_cap},
                 {"seed", rc.policy.seed}};
  j["index_path"] = optional_json(path_string(rc.index_path));
  j["repeats"] = rc.repeats;
  j["parallelism"] = rc.parallelism;
  j["tuner"] = {{"epsilon", rc.tuner.epsilon},
                {"seed", rc.tuner.seed},
                {"max_epochs", rc.tuner.max_epochs},
                {"max_candidate_evals", optional_json(rc.tuner.max_candidate_evals)},
                {"demos_during_tuning", policy_name(rc.tuner.demos_during_tuning)},
                {"scoring_repeats", rc.tuner.scoring_repeats},
                {"instruction_char_cap", rc.tuner.instruction_char_cap}};
  std::vector<std::string> instructions;
  for (auto o : rc.matrix.instructions) instructions.push_back(matrix_instruction_name(o));
  std::vector<std::string> strategies;
  for (auto k : rc.matrix.strategies) strategies.emplace_back(policy_name(k));
  std::vector<std::string> tuning;
  for (auto k : rc.matrix.tuning_demos) tuning.emplace_back(policy_name(k));
  j["matrix"] = {{"instructions", instructions},
                 {"strategies", strategies},
                 {"tuning_demos", tuning},
                 {"tuned", rc.matrix.tuned}};
  j["output_dir"] = rc.output_dir.string();
  j["timestamps"] = rc.timestamps == TimestampMode::kLogical ? "logical" : "wall";
  return j;
}

std::string config_fingerprint(const RunConfig& config) {
  // Where results are written or cached does not change them.
  nlohmann::ordered_json j = to_json(config);
  j.erase("output_dir");
  j["backend"].erase("cache_dir");
  j["embedder"].erase("cache_dir");
  return sha256_hex(j.dump());
}

Instruction resolve_instruction(const std::string& source) {
  if (source == "simple" || source == "builtin_simple") return builtin_templates().simple;
  if (source == "expert" || source == "builtin_expert") return builtin_templates().expert;
  std::filesystem::path path(source);
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) {
    path /= "tuned_instruction.txt";
    std::string text = read_file(path);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return Instruction{std::move(text), InstructionOrigin::kTuned};
  }
  std::string text = read_file(path);
  if (text.find("\n=== Final instruction") != std::string::npos) {
    return Instruction{read_final_instruction(path), InstructionOrigin::kTuned};
  }
  if (!text.empty() && text.back() == '\n') text.pop_back();
  if (trim(text).empty()) throw ConfigError(fmt::format("instruction file {} is empty", path.string()));
  return Instruction{std::move(text), InstructionOrigin::kUser};
}

Datasets load_datasets(const CorpusSource& source) {
  Datasets d;
  if (source.path) {
    Corpus corpus = load_corpus(*source.path);
    if (!source.test_reports.empty()) {
      auto split = split_by_report(corpus, SplitSpec::named({source.test_reports.begin(), source.test_reports.end()}));
      d.train.emplace(std::move(split.train));
      d.test.emplace(std::move(split.test));
    } else if (source.test_report_count) {
      auto split = split_by_report(corpus, SplitSpec::sampled(*source.test_report_count, source.split_seed));
      d.train.emplace(std::move(split.train));
      d.test.emplace(std::move(split.test));
    } else {
      d.train.emplace(corpus);
      d.test.emplace(std::move(corpus));
    }
  }
  if (source.train) d.train.emplace(load_corpus(*source.train));
  if (source.test) d.test.emplace(load_corpus(*source.test));
  return d;
}

}  // namespace iclopt::cli
