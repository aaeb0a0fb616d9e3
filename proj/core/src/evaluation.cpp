#include "iclopt/evaluation.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/gateway.hpp"

namespace iclopt {

void ConfusionMatrix::record(bool gold, const ParsedLabel& prediction) {
  if (!prediction.valid()) {
    ++invalid;
    ++(gold ? fn : fp);
    return;
  }
  const bool predicted = prediction.as_bool();
  if (predicted && gold) {
    ++tp;
  } else if (predicted) {
    ++fp;
  } else if (gold) {
    ++fn;
  } else {
    ++tn;
  }
}

Metrics metrics_from_confusion(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw PreconditionError("metrics of an empty confusion matrix");
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.accuracy = ratio(cm.tp + cm.tn, total);
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  const double pr = m.precision + m.recall;
  m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
  return m;
}

void summarize(EvalReport& report) {
  const auto n = static_cast<double>(report.per_run.size());
  report.repeats = report.per_run.size();
  report.mean = {};
  report.stddev = {};
  if (report.per_run.empty()) return;
  constexpr double Metrics::*kFields[] = {&Metrics::accuracy, &Metrics::precision, &Metrics::recall,
                                          &Metrics::f1};
  for (auto field : kFields) {
    double sum = 0.0;
    for (const auto& run : report.per_run) sum += run.metrics.*field;
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& run : report.per_run) sq += (run.metrics.*field - mean) * (run.metrics.*field - mean);
    report.mean.*field = mean;
    report.stddev.*field = std::sqrt(sq / n);
  }
}

Classification classify_passage(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& policy,
                                const Passage& passage, const ClassifyContext& context) {
  SelectionContext selection{context.train, context.index, &gateway, context.nonce};
  const auto demos = select(policy, passage, selection);
  Classification result;
  result.prompt = assemble_classification_prompt(instruction, demos, passage.text);
  ChatRequest request;
  request.model = context.generation.model;
  request.temperature = context.generation.temperature;
  request.max_output_tokens = context.generation.max_output_tokens;
  request.messages = result.prompt;
  CallOptions call;
  call.nonce = context.nonce;
  result.label = parse_label(gateway.complete(request, call).text);
  if (!result.label.valid()) {
    call.bypass_cache = true;
    result.label = parse_label(gateway.complete(request, call).text);
  }
  return result;
}

ParsedLabel classify_one(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& policy,
                         const Passage& passage, const ClassifyContext& context) {
  return classify_passage(gateway, instruction, policy, passage, context).label;
}

EvalReport evaluate(Gateway& gateway, const Instruction& instruction, const SelectionPolicy& policy,
                    const Corpus& dataset, const EvalOptions& options) {
  if (options.repeats < 1) throw PreconditionError("evaluate: repeats must be >= 1");
  if (options.parallelism < 1) throw PreconditionError("evaluate: parallelism must be >= 1");
  if (policy.kind == PolicyKind::kSimilar && options.index == nullptr) {
    throw PreconditionError("evaluate: similar selection needs an embedding index");
  }
  EvalReport report;
  report.config_fingerprint = options.config_fingerprint;
  for (std::size_t run = 0; run < options.repeats; ++run) {
    ClassifyContext context{options.train, options.index, options.generation, options.nonce_base + run};
    std::vector<ParsedLabel> predictions(dataset.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= dataset.size()) return;
        try {
          predictions[i] = classify_one(gateway, instruction, policy, dataset[i], context);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(dataset.size());
          return;
        }
      }
    };
    const std::size_t workers = std::min(options.parallelism, dataset.size());
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    RunResult result;
    for (std::size_t i = 0; i < dataset.size(); ++i) result.confusion.record(dataset[i].label, predictions[i]);
    result.metrics = metrics_from_confusion(result.confusion);
    report.per_run.push_back(result);
  }
  summarize(report);
  return report;
}

std::string format_percent(double ratio) {
  // Half-up at one decimal; the 1e-9 absorbs binary representation error
  // (e.g. 0.6665 stored as 0.66649999...).
  const double tenths = std::floor(ratio * 1000.0 + 0.5 + 1e-9);
  return fmt::format("{:.1f}", tenths / 10.0);
}

std::string render_table_row(std::string_view label, const Metrics& m) {
  return fmt::format("| {} | {} | {} | {} | {} |", label, format_percent(m.accuracy), format_percent(m.precision),
                     format_percent(m.recall), format_percent(m.f1));
}

nlohmann::ordered_json to_json(const ConfusionMatrix& cm) {
  nlohmann::ordered_json j;
  j["tp"] = cm.tp;
  j["fp"] = cm.fp;
  j["fn"] = cm.fn;
  j["tn"] = cm.tn;
  j["invalid"] = cm.invalid;
  return j;
}

nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  return j;
}

Metrics metrics_from_json(const nlohmann::json& j) {
  return Metrics{j.at("accuracy").get<double>(), j.at("precision").get<double>(), j.at("recall").get<double>(),
                 j.at("f1").get<double>()};
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["config_fingerprint"] = report.config_fingerprint;
  j["repeats"] = report.repeats;
  j["mean"] = to_json(report.mean);
  j["stddev"] = to_json(report.stddev);
  auto runs = nlohmann::ordered_json::array();
  for (const auto& run : report.per_run) {
    nlohmann::ordered_json r;
    r["confusion"] = to_json(run.confusion);
    r["metrics"] = to_json(run.metrics);
    runs.push_back(std::move(r));
  }
  j["per_run"] = std::move(runs);
  return j;
}

}  // namespace iclopt
