#include "cli/commands.hpp"

#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cli/matrix.hpp"
#include "iclopt/error.hpp"
#include "iclopt/text_util.hpp"

namespace iclopt::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json stats_json(const ClassStats& s) {
  ordered_json j;
  j["total"] = s.total;
  j["positives"] = s.positives;
  j["positive_rate"] = s.positive_rate;
  j["reports"] = s.per_report.size();
  ordered_json per = ordered_json::object();
  for (const auto& [id, c] : s.per_report) per[id] = {{"total", c.total}, {"positives", c.positives}};
  j["per_report"] = std::move(per);
  return j;
}

ordered_json provenance(const RunConfig& config) {
  ordered_json j;
  j["config_fingerprint"] = config_fingerprint(config);
  j["seed"] = config.seed;
  return j;
}

void write_manifest(const RunConfig& config, std::string_view command) {
  ordered_json j = provenance(config);
  j["command"] = command;
  j["config"] = to_json(config);
  write_file_atomic(config.output_dir / "run.json", dump(j));
}

const Corpus& require(const std::optional<Corpus>& corpus, std::string_view what) {
  if (!corpus) throw ConfigError(fmt::format("no {} corpus configured (set corpus.path or corpus.{})", what, what));
  return *corpus;
}

std::unique_ptr<Gateway> embedding_gateway(const RunConfig& config) {
  validate(config.embedder);
  GatewayOptions options;
  options.retry.max_retries = config.embedder.retry_max;
  options.retry.base_delay = std::chrono::milliseconds(config.embedder.retry_base_delay_ms);
  options.cache_dir = config.embedder.cache_dir;
  return std::make_unique<Gateway>(nullptr, make_embedding_backend(config.embedder), std::move(options));
}

std::unique_ptr<Gateway> full_gateway(const RunConfig& config) {
  validate(config.backend);
  validate(config.embedder);
  return make_gateway(config.backend, config.embedder);
}

SelectionPolicy configured_policy(const RunConfig& config) { return config.policy; }

void write_tables(const MatrixResult& result, const fs::path& dir, std::ostream& out) {
  const std::string t1 = render_untuned_markdown(result);
  write_file_atomic(dir / "table1.md", t1);
  write_file_atomic(dir / "table1.csv", render_untuned_csv(result));
  out << t1;
  if (!result.tuned.empty()) {
    const std::string t2 = render_tuned_markdown(result);
    write_file_atomic(dir / "table2.md", t2);
    write_file_atomic(dir / "table2.csv", render_tuned_csv(result));
    out << "\n" << t2;
  }
}

}  // namespace

int cmd_split(const RunConfig& config, std::ostream& out) {
  if (!config.corpus.path) throw ConfigError("split requires corpus.path");
  if (config.corpus.test_reports.empty() && !config.corpus.test_report_count) {
    throw ConfigError("split requires corpus.split.test_reports or corpus.split.test_report_count");
  }
  const Datasets d = load_datasets(config.corpus);
  save_corpus_jsonl(*d.train, config.output_dir / "train.jsonl");
  save_corpus_jsonl(*d.test, config.output_dir / "test.jsonl");
  ordered_json j = provenance(config);
  j["split_seed"] = config.corpus.split_seed;
  j["test_reports"] = d.test->report_ids();
  j["train"] = stats_json(class_stats(*d.train));
  j["test"] = stats_json(class_stats(*d.test));
  write_file_atomic(config.output_dir / "stats.json", dump(j));
  write_manifest(config, "split");
  out << fmt::format("train: {} passages from {} reports\ntest: {} passages from {} reports\n", d.train->size(),
                     d.train->report_ids().size(), d.test->size(), d.test->report_ids().size());
  return kExitOk;
}

int cmd_stats(const RunConfig& config, std::ostream& out) {
  ordered_json j = provenance(config);
  if (config.corpus.path) j["corpus"] = stats_json(class_stats(load_corpus(*config.corpus.path)));
  if (config.corpus.train) j["train"] = stats_json(class_stats(load_corpus(*config.corpus.train)));
  if (config.corpus.test) j["test"] = stats_json(class_stats(load_corpus(*config.corpus.test)));
  if (j.size() == 2) throw ConfigError("stats requires corpus.path, corpus.train or corpus.test");
  out << dump(j);
  return kExitOk;
}

int cmd_index(const RunConfig& config, std::ostream& out) {
  const Datasets d = load_datasets(config.corpus);
  const Corpus& train = require(d.train, "train");
  auto gateway = embedding_gateway(config);
  const EmbeddingIndex index = build_index(train, *gateway);
  const fs::path path = config.index_path.value_or(config.output_dir / "index.jsonl");
  save_index(index, path);
  write_manifest(config, "index");
  out << fmt::format("indexed {} passages with {} (dim {}) -> {}\n", index.size(), index.embedding_model(), index.dim(),
                     path.string());
  return kExitOk;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  const SelectionPolicy policy = configured_policy(config);
  std::optional<EmbeddingIndex> index;
  if (policy.kind == PolicyKind::kSimilar) {
    if (!config.index_path) throw PreconditionError("similar policy requires an embedding index (set index_path)");
    if (!fs::exists(*config.index_path)) {
      throw PreconditionError(fmt::format("embedding index {} does not exist", config.index_path->string()));
    }
  }
  const Datasets d = load_datasets(config.corpus);
  const Corpus& test = require(d.test, "test");
  const Corpus& train = require(d.train, "train");
  if (policy.kind == PolicyKind::kSimilar) index = load_index(*config.index_path);
  const Instruction instruction = resolve_instruction(config.instruction);
  auto gateway = full_gateway(config);

  EvalOptions options;
  options.repeats = config.repeats;
  options.parallelism = config.parallelism;
  options.generation = config.generation();
  options.train = &train;
  options.index = index ? &*index : nullptr;
  options.config_fingerprint = config_fingerprint(config);
  const EvalReport report = evaluate(*gateway, instruction, policy, test, options);

  ordered_json j = provenance(config);
  j["policy_seed"] = config.policy.seed;
  j["model"] = config.model;
  j["instruction"] = {{"origin", origin_name(instruction.origin)}, {"text", instruction.text}};
  j["policy"] = policy_name(policy.kind);
  j["train_corpus"] = train.name();
  j["test_corpus"] = test.name();
  j["report"] = to_json(report);
  write_file_atomic(config.output_dir / "eval_report.json", dump(j));
  const std::string row = render_table_row(policy_label(policy.kind), report.mean) + "\n";
  write_file_atomic(config.output_dir / "eval_row.md", row);
  write_manifest(config, "eval");
  out << row;
  return kExitOk;
}

int cmd_tune(const RunConfig& config, std::ostream& out) {
  const Datasets d = load_datasets(config.corpus);
  const Corpus& train = require(d.train, "train");
  const Instruction initial = resolve_instruction(config.instruction);
  auto gateway = full_gateway(config);
  TunerConfig tc = config.tuner;
  tc.clock = config.clock();
  write_manifest(config, "tune");
  TuneResult result;
  try {
    result = tune(*gateway, initial, train, tc);
  } catch (const TuneAborted& e) {
    write_file_atomic(config.output_dir / "events.jsonl", events_to_jsonl(e.partial().events));
    ordered_json err = provenance(config);
    err["tuner_seed"] = config.tuner.seed;
    err["error"] = e.what();
    err["events_recorded"] = e.partial().events.size();
    err["partial"] = to_json(e.partial());
    write_file_atomic(config.output_dir / "tune_error.json", dump(err));
    if (e.cause()) std::rethrow_exception(e.cause());
    throw;
  }
  write_file_atomic(config.output_dir / "tuned_instruction.txt", result.final_instruction.text + "\n");
  write_file_atomic(config.output_dir / "events.jsonl", events_to_jsonl(result.events));
  export_evolution(result, config.output_dir / "evolution.txt");
  ordered_json j = provenance(config);
  j["tuner_seed"] = config.tuner.seed;
  j["result"] = to_json(result);
  write_file_atomic(config.output_dir / "tune_result.json", dump(j));

  std::size_t accepted = 0;
  for (const auto& e : result.events) accepted += e.accepted ? 1 : 0;
  out << fmt::format("accepted {} of {} candidates; train F1 {} -> {}\n", accepted, result.candidates_evaluated,
                     format_percent(result.initial_train_f1), format_percent(result.final_train_f1));
  return kExitOk;
}

int cmd_matrix(const RunConfig& config, std::ostream& out) {
  const Datasets d = load_datasets(config.corpus);
  const Corpus& train = require(d.train, "train");
  const Corpus& test = require(d.test, "test");
  auto gateway = full_gateway(config);
  const MatrixResult result = run_matrix(config, *gateway, train, test, config.output_dir / "tuned");
  write_file_atomic(config.output_dir / "matrix.json", dump(to_json(result)));
  write_tables(result, config.output_dir, out);
  write_manifest(config, "matrix");
  return result.any_failed() ? kExitCellFailed : kExitOk;
}

int cmd_render(const RunConfig& config, const fs::path& matrix_json, std::ostream& out) {
  json j;
  try {
    j = json::parse(read_file(matrix_json));
  } catch (const json::parse_error& e) {
    throw LoadError(fmt::format("{}: {}", matrix_json.string(), e.what()));
  }
  const MatrixResult result = matrix_from_json(j);
  write_tables(result, config.output_dir, out);
  return kExitOk;
}

int exit_code_for(std::exception_ptr error, std::ostream& err) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << "\n";
    return kExitLoad;
  } catch (const PreconditionError& e) {
    err << "precondition failed: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const ScenarioError& e) {
    err << "scenario error: " << e.what() << "\n";
    return kExitScenario;
  } catch (const TuneAborted& e) {
    err << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

namespace {

enum class FlagType { kString, kInt, kUint, kDouble, kBool, kList };

struct FlagSpec {
  const char* flag;
  const char* key;
  FlagType type;
  const char* help;
};

constexpr FlagSpec kFlags[] = {
    {"--corpus", "corpus.path", FlagType::kString, "single corpus file (JSONL or CSV)"},
    {"--train", "corpus.train", FlagType::kString, "training corpus file"},
    {"--test", "corpus.test", FlagType::kString, "test corpus file"},
    {"--test-reports", "corpus.split.test_reports", FlagType::kList, "comma-separated test report ids"},
    {"--test-report-count", "corpus.split.test_report_count", FlagType::kUint, "number of sampled test reports"},
    {"--split-seed", "corpus.split.seed", FlagType::kUint, "seed for sampled splits"},
    {"--backend", "backend.kind", FlagType::kString, "http | scripted"},
    {"--base-url", "backend.base_url", FlagType::kString, "chat endpoint base url"},
    {"--credential-env", "backend.credential_env_var", FlagType::kString, "env var holding the API key"},
    {"--scenario", "backend.scenario_path", FlagType::kString, "scripted scenario JSONL"},
    {"--cache-dir", "backend.cache_dir", FlagType::kString, "on-disk response cache"},
    {"--retry-max", "backend.retry_max", FlagType::kInt, "retries for transient failures"},
    {"--max-in-flight", "backend.max_in_flight", FlagType::kInt, "concurrent requests"},
    {"--embedder", "embedder.kind", FlagType::kString, "http | mock_embed"},
    {"--embedder-base-url", "embedder.base_url", FlagType::kString, "embedding endpoint base url"},
    {"--embedding-model", "embedder.model", FlagType::kString, "embedding model name"},
    {"--dim", "embedder.dim", FlagType::kInt, "mock embedding dimension"},
    {"--model", "model", FlagType::kString, "chat model"},
    {"--temperature", "temperature", FlagType::kDouble, "sampling temperature"},
    {"--instruction", "instruction", FlagType::kString, "simple | expert | file | tune output dir"},
    {"--policy", "policy.kind", FlagType::kString, "zero_shot | static | random | similar"},
    {"--k", "policy.k", FlagType::kUint, "demonstrations per prompt"},
    {"--per-class-cap", "policy.per_class_cap", FlagType::kUint, "max similar demonstrations per label"},
    {"--policy-seed", "policy.seed", FlagType::kUint, "seed for random demonstrations"},
    {"--index", "index_path", FlagType::kString, "embedding index file"},
    {"--repeats", "repeats", FlagType::kUint, "evaluation repeats"},
    {"--parallelism", "parallelism", FlagType::kUint, "passages classified concurrently"},
    {"--epsilon", "tuner.epsilon", FlagType::kDouble, "acceptance margin"},
    {"--max-epochs", "tuner.max_epochs", FlagType::kUint, "passes over the training set"},
    {"--max-candidate-evals", "tuner.max_candidate_evals", FlagType::kUint, "stop after this many candidates"},
    {"--tuning-demos", "tuner.demos_during_tuning", FlagType::kString, "zero_shot | static"},
    {"--scoring-repeats", "tuner.scoring_repeats", FlagType::kUint, "repeats per candidate score"},
    {"--char-cap", "tuner.instruction_char_cap", FlagType::kUint, "max candidate instruction length"},
    {"--tuner-seed", "tuner.seed", FlagType::kUint, "seed for the training order"},
    {"--matrix-instructions", "matrix.instructions", FlagType::kList, "comma-separated: simple,expert"},
    {"--matrix-strategies", "matrix.strategies", FlagType::kList, "comma-separated example strategies"},
    {"--matrix-tuning-demos", "matrix.tuning_demos", FlagType::kList, "comma-separated: zero_shot,static"},
    {"--matrix-tuned", "matrix.tuned", FlagType::kBool, "also run the tuned rows"},
    {"--output-dir,-o", "output_dir", FlagType::kString, "artifact directory"},
    {"--seed", "seed", FlagType::kUint, "global seed"},
    {"--timestamps", "timestamps", FlagType::kString, "wall | logical"},
};

json convert(const FlagSpec& spec, const std::string& raw) {
  try {
    switch (spec.type) {
      case FlagType::kString: return raw;
      case FlagType::kInt: return std::stoi(raw);
      case FlagType::kUint: {
        if (!raw.empty() && raw[0] == '-') throw std::invalid_argument(raw);
        return static_cast<std::uint64_t>(std::stoull(raw));
      }
      case FlagType::kDouble: return std::stod(raw);
      case FlagType::kBool: {
        const std::string v = to_lower(raw);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::invalid_argument(raw);
      }
      case FlagType::kList: {
        json list = json::array();
        std::string item;
        for (char c : raw + ",") {
          if (c == ',') {
            if (!trim(item).empty()) list.push_back(std::string(trim(item)));
            item.clear();
          } else {
            item += c;
          }
        }
        return list;
      }
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError(fmt::format("invalid value '{}' for {}", raw, spec.key));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt optimization for binary passage classification", "iclopt"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  app.add_option("--config,-c", config_path, "JSON config file");
  app.add_option("--set", overrides, "override a config key: dotted.key=value (value parsed as JSON)");
  std::map<std::string, std::string> flag_values;
  for (const auto& spec : kFlags) {
    app.add_option_function<std::string>(
        spec.flag, [&flag_values, &spec](const std::string& v) { flag_values[spec.key] = v; }, spec.help);
  }

  std::map<std::string, std::function<int(const RunConfig&)>> commands;
  const auto add = [&](const char* name, const char* help, std::function<int(const RunConfig&)> fn) {
    app.add_subcommand(name, help);
    commands[name] = std::move(fn);
  };
  add("split", "split a corpus by report and write train/test files", [&](const RunConfig& c) {
    return cmd_split(c, out);
  });
  add("stats", "print label statistics", [&](const RunConfig& c) { return cmd_stats(c, out); });
  add("index", "embed the training corpus", [&](const RunConfig& c) { return cmd_index(c, out); });
  add("eval", "evaluate one instruction and example strategy", [&](const RunConfig& c) { return cmd_eval(c, out); });
  add("tune", "rewrite the instruction from training errors", [&](const RunConfig& c) { return cmd_tune(c, out); });
  add("matrix", "run every instruction and example strategy", [&](const RunConfig& c) {
    return cmd_matrix(c, out);
  });
  std::optional<std::string> render_input;
  app.add_subcommand("render", "render tables from a saved matrix result")
      ->add_option("--input,-i", render_input, "matrix.json (default: <output_dir>/matrix.json)");
  commands["render"] = [&](const RunConfig& c) {
    return cmd_render(c, render_input ? fs::path(*render_input) : c.output_dir / "matrix.json", out);
  };

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    json config = config_path ? load_config_json(*config_path) : json::object();
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError(fmt::format("--set expects key=value, got '{}'", o));
      const std::string raw = o.substr(eq + 1);
      json value = json::parse(raw, nullptr, false);
      set_key(config, o.substr(0, eq), value.is_discarded() ? json(raw) : value);
    }
    for (const auto& spec : kFlags) {
      if (auto it = flag_values.find(spec.key); it != flag_values.end()) {
        set_key(config, spec.key, convert(spec, it->second));
      }
    }
    const RunConfig rc = resolve(config);
    return commands.at(app.get_subcommands().front()->get_name())(rc);
  } catch (...) {
    return exit_code_for(std::current_exception(), err);
  }
}

}  // namespace iclopt::cli
