#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/evaluation.hpp"
#include "iclopt/hashing.hpp"
#include "iclopt/random.hpp"
#include "support/test_support.hpp"

namespace iclopt {
namespace {

using testing::FnBackend;
using testing::make_corpus;

const Instruction kInstruction{"Classify.", InstructionOrigin::kUser};

ConfusionMatrix cm(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  ConfusionMatrix m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  return m;
}

TEST(Metrics, HandComputedExample) {
  const Metrics m = metrics_from_confusion(cm(2, 1, 0, 1));
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  EXPECT_NEAR(m.precision, 0.6667, 1e-4);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.f1, 0.8, 1e-12);
}

TEST(Metrics, EmptyDenominatorsGiveZero) {
  const Metrics m = metrics_from_confusion(cm(0, 0, 0, 5));
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_THROW(metrics_from_confusion(cm(0, 0, 0, 0)), PreconditionError);
}

TEST(Metrics, AccuracyDecomposition) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const ConfusionMatrix c = cm(rng.below(50), rng.below(50), rng.below(50), 1 + rng.below(50));
    const Metrics m = metrics_from_confusion(c);
    EXPECT_NEAR(m.accuracy, 1.0 - static_cast<double>(c.fp + c.fn) / c.total(), 1e-12);
    EXPECT_GE(m.f1, 0.0);
    EXPECT_LE(m.f1, 1.0);
  }
}

TEST(Confusion, InvalidCountsAsWrong) {
  ConfusionMatrix c;
  c.record(true, parse_label("True"));
  c.record(true, parse_label("maybe"));
  c.record(false, parse_label("no idea"));
  c.record(false, parse_label("false"));
  ConfusionMatrix want = cm(1, 1, 1, 1);
  want.invalid = 2;
  EXPECT_EQ(c, want);
  EXPECT_LE(c.invalid, c.fp + c.fn);
}

TEST(FormatPercent, HalfUpOneDecimal) {
  EXPECT_EQ(format_percent(0.6667), "66.7");
  EXPECT_EQ(format_percent(0.8), "80.0");
  EXPECT_EQ(format_percent(1.0), "100.0");
  EXPECT_EQ(format_percent(0.0), "0.0");
  EXPECT_EQ(format_percent(0.1235), "12.4");
  EXPECT_EQ(format_percent(0.6665), "66.7");
  EXPECT_EQ(format_percent(0.12349), "12.3");
  EXPECT_EQ(format_percent(2.0 / 3.0), "66.7");
  EXPECT_EQ(render_table_row("Similar", Metrics{0.75, 2.0 / 3.0, 1.0, 0.8}), "| Similar | 75.0 | 66.7 | 100.0 | 80.0 |");
}

TEST(Summarize, MeanAndPopulationStddev) {
  EvalReport r;
  for (double acc : {0.5, 0.7, 0.9}) r.per_run.push_back({{}, Metrics{acc, acc, acc, acc}});
  summarize(r);
  EXPECT_NEAR(r.mean.accuracy, 0.7, 1e-12);
  EXPECT_NEAR(r.stddev.f1, std::sqrt((0.04 + 0.0 + 0.04) / 3.0), 1e-12);
}

Corpus four() {
  return make_corpus("four", {{"a", "r", "alpha", true}, {"b", "r", "beta", true}, {"c", "r", "gamma", false},
                              {"d", "r", "delta", false}});
}

TEST(ClassifyOne, ScriptedTrue) {
  auto gw = testing::scripted_gateway("{\"match\": {\"default\": true}, \"response\": \"True\"}\n");
  const Corpus c = four();
  EXPECT_EQ(classify_one(*gw, kInstruction, SelectionPolicy::zero_shot(), c[0], {}).value, LabelValue::kTrue);
}

TEST(ClassifyOne, GarbageTwiceIsInvalid) {
  auto backend = std::make_shared<FnBackend>([](const ChatRequest&) { return "I cannot tell."; });
  auto gw = testing::gateway_with(backend);
  const Corpus c = four();
  EXPECT_FALSE(classify_one(*gw, kInstruction, SelectionPolicy::zero_shot(), c[0], {}).valid());
  EXPECT_EQ(backend->calls(), 2u);
}

TEST(ClassifyOne, RetryBypassesCache) {
  int n = 0;
  auto backend = std::make_shared<FnBackend>([&n](const ChatRequest&) { return n++ == 0 ? "hmm" : "False"; });
  auto gw = testing::gateway_with(backend);
  const Corpus c = four();
  EXPECT_EQ(classify_one(*gw, kInstruction, SelectionPolicy::zero_shot(), c[2], {}).value, LabelValue::kFalse);
  // The retried answer replaced the cached garbage.
  EXPECT_EQ(classify_one(*gw, kInstruction, SelectionPolicy::zero_shot(), c[2], {}).value, LabelValue::kFalse);
  EXPECT_EQ(backend->calls(), 2u);
}

TEST(ClassifyOne, SimilarWithoutIndex) {
  auto gw = testing::gateway_with(std::make_shared<FnBackend>([](const ChatRequest&) { return "True"; }));
  const Corpus c = four();
  ClassifyContext ctx;
  ctx.train = &c;
  EXPECT_THROW(classify_one(*gw, kInstruction, SelectionPolicy::similar(), c[0], ctx), PreconditionError);
  EvalOptions options;
  options.train = &c;
  EXPECT_THROW(evaluate(*gw, kInstruction, SelectionPolicy::similar(), c, options), PreconditionError);
}

TEST(Evaluate, DefaultsToSevenRepeats) {
  EXPECT_EQ(EvalOptions{}.repeats, 7u);
  EXPECT_EQ(kDefaultRepeats, 7u);
}

TEST(Evaluate, DeterministicBackendHasZeroSpread) {
  const Corpus c = four();
  auto backend = std::make_shared<FnBackend>(testing::gold_answers(c, {"beta"}));
  auto gw = testing::gateway_with(backend);
  const EvalReport r = evaluate(*gw, kInstruction, SelectionPolicy::zero_shot(), c, EvalOptions{});
  ASSERT_EQ(r.per_run.size(), 7u);
  EXPECT_EQ(r.repeats, 7u);
  for (const auto& run : r.per_run) {
    EXPECT_EQ(run.confusion, r.per_run.front().confusion);
    EXPECT_DOUBLE_EQ(run.metrics.accuracy, 0.75);
    EXPECT_EQ(run.confusion.total(), c.size());
  }
  EXPECT_EQ(r.stddev, Metrics{});
  // Every run reached the backend: no cross-run cache hits.
  EXPECT_EQ(backend->calls(), 7u * c.size());
}

TEST(Evaluate, JsonCarriesRepeatsAndRuns) {
  const Corpus c = four();
  auto gw = testing::gateway_with(std::make_shared<FnBackend>(testing::gold_answers(c)));
  EvalOptions options;
  options.config_fingerprint = "abc";
  const auto j = to_json(evaluate(*gw, kInstruction, SelectionPolicy::zero_shot(), c, options));
  EXPECT_EQ(j.at("repeats"), 7);
  EXPECT_EQ(j.at("config_fingerprint"), "abc");
  EXPECT_EQ(j.at("per_run").size(), 7u);
  EXPECT_EQ(metrics_from_json(j.at("mean")), (Metrics{1.0, 1.0, 1.0, 1.0}));
}

TEST(Evaluate, InvariantUnderPassagePermutation) {
  const Corpus train = testing::synthetic_corpus(30, 3);
  const Corpus data = testing::synthetic_corpus(25, 4);
  // Answer depends on the prompt's demos, so the random policy matters.
  auto answer = [](const ChatRequest& r) -> std::string {
    return fnv1a64(render_transcript(r.messages)) % 3 == 0 ? "True" : "False";
  };
  std::vector<Passage> shuffled = data.passages();
  Rng(5).shuffle(shuffled);
  const Corpus permuted("synthetic", shuffled);

  EvalOptions options;
  options.repeats = 3;
  options.train = &train;
  const auto policy = SelectionPolicy::random(3, 9);
  auto g1 = testing::gateway_with(std::make_shared<FnBackend>(answer));
  auto g2 = testing::gateway_with(std::make_shared<FnBackend>(answer));
  const EvalReport a = evaluate(*g1, kInstruction, policy, data, options);
  const EvalReport b = evaluate(*g2, kInstruction, policy, permuted, options);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(a.per_run[r].confusion, b.per_run[r].confusion);
}

TEST(Evaluate, ParallelismDoesNotChangeResults) {
  const Corpus data = testing::synthetic_corpus(60, 12);
  auto answer = [](const ChatRequest& r) -> std::string {
    return fnv1a64(r.messages.back().content) % 2 ? "True" : "False";
  };
  EvalOptions serial;
  serial.repeats = 2;
  serial.parallelism = 1;
  EvalOptions parallel = serial;
  parallel.parallelism = 8;
  auto g1 = testing::gateway_with(std::make_shared<FnBackend>(answer));
  auto g2 = testing::gateway_with(std::make_shared<FnBackend>(answer));
  const EvalReport a = evaluate(*g1, kInstruction, SelectionPolicy::zero_shot(), data, serial);
  const EvalReport b = evaluate(*g2, kInstruction, SelectionPolicy::zero_shot(), data, parallel);
  EXPECT_EQ(a.per_run[0].confusion, b.per_run[0].confusion);
  EXPECT_EQ(a.mean, b.mean);
}

TEST(Evaluate, BackendFailureAborts) {
  auto gw = testing::gateway_with(std::make_shared<FnBackend>([](const ChatRequest& r) -> std::string {
    if (r.messages.back().content == "gamma") throw BackendError(BackendError::Kind::kPermanent, 401, "denied");
    return "True";
  }));
  EXPECT_THROW(evaluate(*gw, kInstruction, SelectionPolicy::zero_shot(), four(), EvalOptions{}), BackendError);
}

}  // namespace
}  // namespace iclopt
