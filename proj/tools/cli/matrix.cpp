#include "cli/matrix.hpp"

#include <map>

#include <fmt/format.h>

#include "iclopt/error.hpp"
#include "iclopt/selection.hpp"
#include "iclopt/templates.hpp"
#include "iclopt/text_util.hpp"
#include "iclopt/tuner.hpp"

namespace iclopt::cli {

namespace {

Instruction builtin(const std::string& name) {
  return name == "expert" ? builtin_templates().expert : builtin_templates().simple;
}

std::string instruction_label(const std::string& name) { return name == "expert" ? "Expert" : "Simple"; }

std::string status_name(CellStatus s) { return s == CellStatus::kOk ? "ok" : "failed"; }

CellStatus parse_status(const std::string& s) { return s == "ok" ? CellStatus::kOk : CellStatus::kFailed; }

SelectionPolicy policy_for(PolicyKind kind, const RunConfig& config) {
  switch (kind) {
    case PolicyKind::kZeroShot: return SelectionPolicy::zero_shot();
    case PolicyKind::kStatic: return SelectionPolicy::fixed(builtin_templates().static_demos);
    case PolicyKind::kRandom: return SelectionPolicy::random(config.policy.k, config.policy.seed);
    case PolicyKind::kSimilar: return SelectionPolicy::similar(config.policy.k, config.policy.per_class_cap);
  }
  return SelectionPolicy::zero_shot();
}

MatrixCell run_cell(const RunConfig& config, Gateway& gateway, const Instruction& instruction, PolicyKind testing,
                    const Corpus& train, const Corpus& test, const EmbeddingIndex* index) {
  MatrixCell cell;
  cell.testing = testing;
  try {
    EvalOptions options;
    options.repeats = config.repeats;
    options.parallelism = config.parallelism;
    options.generation = config.generation();
    options.train = &train;
    options.index = index;
    const EvalReport report = evaluate(gateway, instruction, policy_for(testing, config), test, options);
    cell.mean = report.mean;
    cell.stddev = report.stddev;
  } catch (const Error& e) {
    cell.status = CellStatus::kFailed;
    cell.error = e.what();
  }
  return cell;
}

std::string percent_or_failed(const MatrixCell* cell, double Metrics::*field) {
  if (cell == nullptr || cell->status != CellStatus::kOk) return "failed";
  return format_percent(cell->mean.*field);
}

constexpr double Metrics::*kColumns[] = {&Metrics::accuracy, &Metrics::precision, &Metrics::recall, &Metrics::f1};

std::vector<std::string> instruction_order(const MatrixResult& r) {
  std::vector<std::string> order;
  const auto add = [&](const std::string& name) {
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
  };
  for (const auto& c : r.untuned) add(c.instruction);
  for (const auto& c : r.tuned) add(c.instruction);
  return order;
}

const MatrixCell* find_cell(const std::vector<MatrixCell>& cells, const std::string& instruction,
                            std::optional<PolicyKind> tuning, PolicyKind testing) {
  for (const auto& c : cells) {
    if (c.instruction == instruction && c.tuning == tuning && c.testing == testing) return &c;
  }
  return nullptr;
}

std::string header_row(const std::vector<std::string>& leading, const std::vector<std::string>& instructions) {
  std::string header = "|";
  std::string rule = "|";
  for (const auto& l : leading) {
    header += fmt::format(" {} |", l);
    rule += "---|";
  }
  for (const auto& name : instructions) {
    for (const char* metric : {"Acc", "Prec", "Rec", "F1"}) {
      header += fmt::format(" {} {} |", instruction_label(name), metric);
      rule += "---:|";
    }
  }
  return header + "\n" + rule + "\n";
}

std::string metric_cells(const std::vector<std::string>& instructions,
                         const std::function<const MatrixCell*(const std::string&)>& lookup) {
  std::string out;
  for (const auto& name : instructions) {
    const MatrixCell* cell = lookup(name);
    for (auto field : kColumns) out += fmt::format(" {} |", percent_or_failed(cell, field));
  }
  return out;
}

template <typename T>
std::vector<T> unique_in_order(const std::vector<T>& items) {
  std::vector<T> out;
  for (const auto& x : items) {
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  }
  return out;
}

nlohmann::ordered_json cell_json(const MatrixCell& c) {
  nlohmann::ordered_json j;
  j["instruction"] = c.instruction;
  j["tuning"] = c.tuning ? nlohmann::ordered_json(policy_name(*c.tuning)) : nlohmann::ordered_json();
  j["testing"] = policy_name(c.testing);
  j["status"] = status_name(c.status);
  j["mean"] = to_json(c.mean);
  j["stddev"] = to_json(c.stddev);
  j["error"] = c.error.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(c.error);
  return j;
}

MatrixCell cell_from_json(const nlohmann::json& j) {
  MatrixCell c;
  c.instruction = j.at("instruction").get<std::string>();
  if (!j.at("tuning").is_null()) c.tuning = parse_policy(j.at("tuning").get<std::string>());
  c.testing = parse_policy(j.at("testing").get<std::string>());
  c.status = parse_status(j.at("status").get<std::string>());
  c.mean = metrics_from_json(j.at("mean"));
  c.stddev = metrics_from_json(j.at("stddev"));
  if (!j.at("error").is_null()) c.error = j.at("error").get<std::string>();
  return c;
}

}  // namespace

bool MatrixResult::any_failed() const {
  for (const auto& c : untuned) {
    if (c.status != CellStatus::kOk) return true;
  }
  for (const auto& c : tuned) {
    if (c.status != CellStatus::kOk) return true;
  }
  for (const auto& t : tuning) {
    if (t.status != CellStatus::kOk) return true;
  }
  return false;
}

MatrixResult run_matrix(const RunConfig& config, Gateway& gateway, const Corpus& train, const Corpus& test,
                        const std::optional<std::filesystem::path>& tuned_dir) {
  const Clock clock = config.clock();
  MatrixResult result;
  result.metadata["config_fingerprint"] = config_fingerprint(config);
  result.metadata["model"] = config.model;
  result.metadata["temperature"] = config.temperature;
  result.metadata["repeats"] = config.repeats;
  result.metadata["epsilon"] = config.tuner.epsilon;
  result.metadata["seed"] = config.seed;
  result.metadata["tuner_seed"] = config.tuner.seed;
  result.metadata["policy_seed"] = config.policy.seed;
  result.metadata["k"] = config.policy.k;
  result.metadata["per_class_cap"] = config.policy.per_class_cap;
  result.metadata["embedding_model"] = gateway.embedding_model();
  result.metadata["train_corpus"] = train.name();
  result.metadata["train_size"] = train.size();
  result.metadata["test_corpus"] = test.name();
  result.metadata["test_size"] = test.size();
  result.metadata["started_at"] = clock();

  const bool needs_index = std::find(config.matrix.strategies.begin(), config.matrix.strategies.end(),
                                     PolicyKind::kSimilar) != config.matrix.strategies.end();
  std::optional<EmbeddingIndex> index;
  std::string index_error;
  if (needs_index) {
    try {
      index = config.index_path ? load_index(*config.index_path) : build_index(train, gateway);
    } catch (const Error& e) {
      index_error = fmt::format("embedding index unavailable: {}", e.what());
    }
  }
  const auto run = [&](const Instruction& instruction, PolicyKind testing) {
    if (testing == PolicyKind::kSimilar && !index) {
      MatrixCell failed;
      failed.testing = testing;
      failed.status = CellStatus::kFailed;
      failed.error = index_error;
      return failed;
    }
    return run_cell(config, gateway, instruction, testing, train, test, index ? &*index : nullptr);
  };

  for (InstructionOrigin origin : config.matrix.instructions) {
    const std::string name = origin == InstructionOrigin::kBuiltinExpert ? "expert" : "simple";
    for (PolicyKind testing : config.matrix.strategies) {
      MatrixCell cell = run(builtin(name), testing);
      cell.instruction = name;
      result.untuned.push_back(std::move(cell));
    }
  }

  if (config.matrix.tuned) {
    for (InstructionOrigin origin : config.matrix.instructions) {
      const std::string name = origin == InstructionOrigin::kBuiltinExpert ? "expert" : "simple";
      for (PolicyKind tuning_demos : config.matrix.tuning_demos) {
        TuningRun tr;
        tr.instruction = name;
        tr.tuning = tuning_demos;
        std::optional<Instruction> tuned;
        TunerConfig tc = config.tuner;
        tc.demos_during_tuning = tuning_demos;
        tc.clock = clock;
        try {
          TuneResult r = tune(gateway, builtin(name), train, tc);
          tr.initial_train_f1 = r.initial_train_f1;
          tr.final_train_f1 = r.final_train_f1;
          for (const auto& e : r.events) tr.accepted += e.accepted ? 1 : 0;
          tr.final_instruction = r.final_instruction.text;
          tuned = r.final_instruction;
          if (tuned_dir) {
            const auto dir = *tuned_dir / fmt::format("{}-{}", name, policy_name(tuning_demos));
            write_file_atomic(dir / "tuned_instruction.txt", r.final_instruction.text + "\n");
            write_file_atomic(dir / "events.jsonl", events_to_jsonl(r.events));
            export_evolution(r, dir / "evolution.txt");
          }
        } catch (const TuneAborted& e) {
          tr.status = CellStatus::kFailed;
          tr.error = e.what();
        }
        result.tuning.push_back(tr);
        for (PolicyKind testing : config.matrix.strategies) {
          MatrixCell cell;
          if (tuned) {
            cell = run(*tuned, testing);
          } else {
            cell.testing = testing;
            cell.status = CellStatus::kFailed;
            cell.error = "tuning failed: " + tr.error;
          }
          cell.instruction = name;
          cell.tuning = tuning_demos;
          result.tuned.push_back(std::move(cell));
        }
      }
    }
  }
  result.metadata["finished_at"] = clock();
  return result;
}

nlohmann::ordered_json to_json(const MatrixResult& r) {
  nlohmann::ordered_json j;
  j["metadata"] = r.metadata;
  auto untuned = nlohmann::ordered_json::array();
  for (const auto& c : r.untuned) untuned.push_back(cell_json(c));
  j["few_shot"] = std::move(untuned);
  auto tuning = nlohmann::ordered_json::array();
  for (const auto& t : r.tuning) {
    nlohmann::ordered_json o;
    o["instruction"] = t.instruction;
    o["tuning"] = policy_name(t.tuning);
    o["status"] = status_name(t.status);
    o["initial_train_f1"] = t.initial_train_f1;
    o["final_train_f1"] = t.final_train_f1;
    o["accepted"] = t.accepted;
    o["final_instruction"] = t.final_instruction;
    o["error"] = t.error.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(t.error);
    tuning.push_back(std::move(o));
  }
  j["tuning"] = std::move(tuning);
  auto tuned = nlohmann::ordered_json::array();
  for (const auto& c : r.tuned) tuned.push_back(cell_json(c));
  j["prompt_design"] = std::move(tuned);
  return j;
}

MatrixResult matrix_from_json(const nlohmann::json& j) {
  MatrixResult r;
  try {
    r.metadata = nlohmann::ordered_json::parse(j.at("metadata").dump());
    for (const auto& c : j.at("few_shot")) r.untuned.push_back(cell_from_json(c));
    for (const auto& t : j.at("tuning")) {
      TuningRun tr;
      tr.instruction = t.at("instruction").get<std::string>();
      tr.tuning = parse_policy(t.at("tuning").get<std::string>());
      tr.status = parse_status(t.at("status").get<std::string>());
      tr.initial_train_f1 = t.at("initial_train_f1").get<double>();
      tr.final_train_f1 = t.at("final_train_f1").get<double>();
      tr.accepted = t.at("accepted").get<std::size_t>();
      tr.final_instruction = t.at("final_instruction").get<std::string>();
      if (!t.at("error").is_null()) tr.error = t.at("error").get<std::string>();
      r.tuning.push_back(std::move(tr));
    }
    for (const auto& c : j.at("prompt_design")) r.tuned.push_back(cell_from_json(c));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("malformed matrix result: {}", e.what()));
  }
  return r;
}

std::string render_untuned_markdown(const MatrixResult& r) {
  const auto instructions = instruction_order(r);
  std::vector<PolicyKind> strategies;
  for (const auto& c : r.untuned) strategies.push_back(c.testing);
  strategies = unique_in_order(strategies);
  std::string out = header_row({"Examples"}, instructions);
  for (PolicyKind s : strategies) {
    out += fmt::format("| {} |", policy_label(s));
    out += metric_cells(instructions, [&](const std::string& name) {
      return find_cell(r.untuned, name, std::nullopt, s);
    });
    out += "\n";
  }
  return out;
}

std::string render_tuned_markdown(const MatrixResult& r) {
  const auto instructions = instruction_order(r);
  std::string out = header_row({"Tuning", "Testing"}, instructions);
  out += "| (no tuning, zero-shot) | |";
  out += metric_cells(instructions, [&](const std::string& name) {
    return find_cell(r.untuned, name, std::nullopt, PolicyKind::kZeroShot);
  });
  out += "\n";
  std::vector<std::pair<PolicyKind, PolicyKind>> rows;
  for (const auto& c : r.tuned) rows.emplace_back(*c.tuning, c.testing);
  for (const auto& [tuning, testing] : unique_in_order(rows)) {
    out += fmt::format("| {} | {} |", policy_label(tuning), policy_label(testing));
    out += metric_cells(instructions, [&](const std::string& name) {
      return find_cell(r.tuned, name, tuning, testing);
    });
    out += "\n";
  }
  return out;
}

namespace {

std::string csv_metrics(const MatrixCell& c) {
  std::string out;
  for (auto field : kColumns) out += "," + percent_or_failed(&c, field);
  return out + "," + status_name(c.status);
}

}  // namespace

std::string render_untuned_csv(const MatrixResult& r) {
  std::string out = "instruction,examples,accuracy,precision,recall,f1,status\n";
  for (const auto& c : r.untuned) {
    out += fmt::format("{},{}{}\n", c.instruction, policy_name(c.testing), csv_metrics(c));
  }
  return out;
}

std::string render_tuned_csv(const MatrixResult& r) {
  std::string out = "initial_instruction,tuning,testing,accuracy,precision,recall,f1,status\n";
  for (const auto& c : r.untuned) {
    if (c.testing == PolicyKind::kZeroShot) {
      out += fmt::format("{},none,zero_shot{}\n", c.instruction, csv_metrics(c));
    }
  }
  for (const auto& c : r.tuned) {
    out += fmt::format("{},{},{}{}\n", c.instruction, policy_name(*c.tuning), policy_name(c.testing), csv_metrics(c));
  }
  return out;
}

}  // namespace iclopt::cli
