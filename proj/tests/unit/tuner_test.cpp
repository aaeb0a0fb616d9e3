#include <map>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "iclopt/error.hpp"
#include "iclopt/random.hpp"
#include "iclopt/templates.hpp"
#include "iclopt/tuner.hpp"
#include "support/test_support.hpp"

namespace iclopt {
namespace {

using testing::FnBackend;
using testing::make_corpus;

const Instruction kInitial{"Say whether the passage has a target.", InstructionOrigin::kUser};

/// Backend for tuning runs: classification answers come from `classify`
/// (keyed by system prompt and passage), reflection and rewrite answers from
/// the given callbacks.
FnBackend::Fn tuning_backend(std::function<std::string(const std::string&, const std::string&)> classify,
                             std::function<std::string()> rationale,
                             std::function<std::string()> rewrite) {
  return [=](const ChatRequest& r) -> std::string {
    const std::string& last = r.messages.back().content;
    if (last.rfind("Your prediction is wrong", 0) == 0) return rationale();
    if (last.rfind("Modify the instruction", 0) == 0) return rewrite();
    return classify(r.messages.front().content, last);
  };
}

Corpus twelve() {
  std::vector<testing::Row> rows;
  for (int i = 0; i < 12; ++i) {
    rows.push_back({"p" + std::to_string(10 + i), "r" + std::to_string(i % 3), "passage " + std::to_string(i), i < 5});
  }
  return make_corpus("twelve", rows);
}

TunerConfig logical_config() {
  TunerConfig c;
  c.clock = logical_clock();
  return c;
}

/// Misclassifies the passages in `wrong`; each rewrite gets the next
/// candidate name; the scorer maps candidate names to F1.
struct ScriptedRun {
  std::vector<std::string> wrong;
  std::vector<std::string> candidates;
  std::map<std::string, double> scores;

  TuneResult run(const Corpus& train, TunerConfig config) const {
    auto next = std::make_shared<std::size_t>(0);
    auto backend = std::make_shared<FnBackend>(tuning_backend(
        [&](const std::string&, const std::string& passage) {
          const Passage* p = nullptr;
          for (const auto& x : train.passages()) {
            if (x.text == passage) p = &x;
          }
          const bool flip = std::find(wrong.begin(), wrong.end(), p->id) != wrong.end();
          return std::string(render_label(flip ? !p->label : p->label));
        },
        [] { return "The instruction is too vague."; },
        [this, next] { return candidates.at((*next)++); }));
    auto gw = testing::gateway_with(backend);
    return tune(*gw, kInitial, train, config, [this](const Instruction& i) { return scores.at(i.text); });
  }
};

TEST(Tune, EpsilonRule) {
  const Corpus train = twelve();
  ScriptedRun small{{"p10"}, {"A"}, {{kInitial.text, 0.70}, {"A", 0.705}}};
  const TuneResult rejected = small.run(train, logical_config());
  ASSERT_EQ(rejected.events.size(), 1u);
  EXPECT_FALSE(rejected.events[0].accepted);
  EXPECT_EQ(rejected.final_instruction.text, kInitial.text);

  ScriptedRun boundary{{"p10"}, {"A"}, {{kInitial.text, 0.70}, {"A", 0.71}}};
  const TuneResult accepted = boundary.run(train, logical_config());
  ASSERT_EQ(accepted.events.size(), 1u);
  EXPECT_TRUE(accepted.events[0].accepted);
  EXPECT_EQ(accepted.final_instruction.text, "A");
  EXPECT_EQ(accepted.final_instruction.origin, InstructionOrigin::kTuned);
  EXPECT_DOUBLE_EQ(accepted.final_train_f1, 0.71);
}

TEST(Tune, LargeEpsilonRejectsSmallGains) {
  ScriptedRun r{{"p10", "p11", "p15"}, {"A", "B", "C"}, {{kInitial.text, 0.5}, {"A", 0.6}, {"B", 0.7}, {"C", 0.8}}};
  TunerConfig c = logical_config();
  c.epsilon = 0.5;
  const TuneResult result = r.run(twelve(), c);
  EXPECT_EQ(result.events.size(), 3u);
  for (const auto& e : result.events) EXPECT_FALSE(e.accepted);
}

TEST(Tune, ReferenceDialogue) {
  const Instruction start{
      "Determine if the text describes a commitment to reducing carbon emissions, achieving net zero, or setting "
      "specific emission reduction targets; return \"True\" if it does, otherwise return \"False\".",
      InstructionOrigin::kUser};
  const std::string passage =
      "2 Guide for Identifying Sustainable Financing. 3 Identified Staff is made up of directors, senior managers or "
      "employees whose professional activities have a significant impact on the risk profile of an entity. An "
      "environmental and climate strategy that aims to contribute to the sustainable tran- sition, addressing the "
      "challenge of accelerating the transition to a carbon neutral economy, taking into account the natural "
      "capital.";
  const std::string rewrite =
      "Determine if the text explicitly describes a commitment to reducing carbon emissions, achieving net zero, or "
      "setting specific, measurable emission reduction targets. Return \"True\" if it does, otherwise return "
      "\"False.\" Focus on clear statements of intent or quantifiable goals rather than general strategies or "
      "aspirations.";
  const Corpus train = make_corpus("one", {{"sf", "r", passage, false}});
  auto backend = std::make_shared<FnBackend>(tuning_backend([](const std::string&, const std::string&) { return "True"; },
                                                            [] { return "It is a broad strategy, not a target."; },
                                                            [&] { return rewrite; }));
  auto gw = testing::gateway_with(backend);
  const TuneResult r = tune(*gw, start, train, logical_config(), [](const Instruction&) { return 0.0; });
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].wrong_prediction, "True");
  EXPECT_EQ(r.events[0].candidate_instruction.text, rewrite);
  EXPECT_NE(r.events[0].candidate_instruction.text.find("explicitly describes a commitment"), std::string::npos);
  // The reflection turn asked for the gold label.
  const auto history = backend->history();
  ASSERT_EQ(history.size(), 3u);
  EXPECT_NE(history[1].messages.back().content.find("the answer to be \"False\""), std::string::npos);
  EXPECT_EQ(history[1].max_output_tokens, kRewriteMaxTokens);
  EXPECT_EQ(history[2].messages.back().content, builtin_templates().modification_text);
}

TEST(Tune, InvalidCandidates) {
  const Corpus train = twelve();
  const std::string long_text(50, 'x');
  ScriptedRun r{{"p10", "p11"}, {long_text, "   "}, {{kInitial.text, 0.5}}};
  TunerConfig c = logical_config();
  c.instruction_char_cap = 40;
  const TuneResult result = r.run(train, c);
  ASSERT_EQ(result.events.size(), 2u);
  for (const auto& e : result.events) {
    EXPECT_FALSE(e.valid);
    EXPECT_FALSE(e.accepted);
    EXPECT_FALSE(e.candidate_f1.has_value());
  }
  EXPECT_EQ(result.candidates_evaluated, 0u);
  EXPECT_NE(render_evolution(result).find("invalid rewrite"), std::string::npos);
}

TEST(Tune, BlankRationaleSkipsRewrite) {
  auto backend = std::make_shared<FnBackend>(tuning_backend(
      [](const std::string&, const std::string&) { return "True"; }, [] { return "  "; }, [] { return "never"; }));
  auto gw = testing::gateway_with(backend);
  const Corpus train = make_corpus("n", {{"a", "r", "text", false}});
  const TuneResult r = tune(*gw, kInitial, train, logical_config(), [](const Instruction&) { return 0.0; });
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_FALSE(r.events[0].valid);
  EXPECT_EQ(backend->calls(), 2u);
}

TEST(Tune, CandidateBudget) {
  ScriptedRun r{{"p10", "p11", "p12", "p13"}, {"A", "B", "C", "D"},
                {{kInitial.text, 0.1}, {"A", 0.2}, {"B", 0.3}, {"C", 0.4}, {"D", 0.5}}};
  TunerConfig c = logical_config();
  c.max_candidate_evals = 2;
  const TuneResult result = r.run(twelve(), c);
  EXPECT_EQ(result.candidates_evaluated, 2u);
  EXPECT_EQ(result.events.size(), 2u);
  EXPECT_EQ(result.epochs_completed, 0u);
}

TEST(Tune, MultipleEpochs) {
  ScriptedRun r{{"p10"}, {"A", "A", "A"}, {{kInitial.text, 0.1}, {"A", 0.1}}};
  TunerConfig c = logical_config();
  c.max_epochs = 3;
  const TuneResult result = r.run(twelve(), c);
  EXPECT_EQ(result.epochs_completed, 3u);
  ASSERT_EQ(result.events.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(result.events[i].epoch, i + 1);
}

TEST(Tune, AbortKeepsPartialLog) {
  const Corpus train = twelve();
  int rewrites = 0;
  auto backend = std::make_shared<FnBackend>(tuning_backend(
      [&](const std::string&, const std::string& passage) {
        return passage == "passage 0" || passage == "passage 1" ? "False" : std::string(passage < "passage 5" ? "True" : "False");
      },
      [] { return "why"; },
      [&]() -> std::string {
        if (rewrites++ == 1) throw BackendError(BackendError::Kind::kPermanent, 500, "gone");
        return "candidate " + std::to_string(rewrites);
      }));
  auto gw = testing::gateway_with(backend);
  try {
    tune(*gw, kInitial, train, logical_config(), [](const Instruction&) { return 0.5; });
    FAIL();
  } catch (const TuneAborted& e) {
    EXPECT_EQ(e.partial().events.size(), 1u);
    ASSERT_TRUE(e.cause());
    EXPECT_THROW(std::rethrow_exception(e.cause()), BackendError);
  }
}

TEST(Tune, ConfigValidation) {
  TunerConfig c;
  c.epsilon = -0.1;
  EXPECT_THROW(validate(c), ConfigError);
  c = TunerConfig{};
  c.demos_during_tuning = PolicyKind::kSimilar;
  EXPECT_THROW(validate(c), ConfigError);
  c = TunerConfig{};
  c.instruction_char_cap = 0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_EQ(TunerConfig{}.epsilon, 0.01);
  EXPECT_EQ(TunerConfig{}.scoring_repeats, 1u);
  EXPECT_EQ(TunerConfig{}.instruction_char_cap, 4000u);
}

TEST(Tune, RandomTrajectoriesKeepInvariants) {
  const Corpus train = twelve();
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    ScriptedRun r;
    std::vector<std::string> ids;
    for (const auto& p : train.passages()) ids.push_back(p.id);
    rng.shuffle(ids);
    r.wrong.assign(ids.begin(), ids.begin() + static_cast<long>(rng.below(train.size() + 1)));
    r.scores[kInitial.text] = rng.uniform() * 0.5;
    for (std::size_t i = 0; i < r.wrong.size(); ++i) {
      const std::string name = "cand" + std::to_string(i);
      r.candidates.push_back(name);
      r.scores[name] = rng.uniform();
    }
    TunerConfig c = logical_config();
    c.epsilon = rng.uniform() * 0.05;
    c.seed = rng.next();
    const TuneResult result = r.run(train, c);

    double incumbent = result.initial_train_f1;
    for (const auto& e : result.events) {
      EXPECT_DOUBLE_EQ(e.incumbent_f1, incumbent);  // single incumbent, no pool
      EXPECT_EQ(e.accepted, *e.candidate_f1 + 1e-12 >= e.incumbent_f1 + c.epsilon);
      if (e.accepted) {
        EXPECT_GE(*e.candidate_f1, incumbent + c.epsilon - 1e-12);
        incumbent = *e.candidate_f1;
      }
    }
    EXPECT_DOUBLE_EQ(result.final_train_f1, incumbent);
    EXPECT_LE(result.candidates_evaluated, result.misclassifications);
    EXPECT_LE(result.misclassifications, train.size() * c.max_epochs);
    EXPECT_EQ(result.misclassifications, r.wrong.size());
    c.clock = logical_clock();  // the logical clock is stateful
    EXPECT_EQ(events_to_jsonl(r.run(train, c).events), events_to_jsonl(result.events));
  }
}

TEST(Tune, SeedChangesVisitOrder) {
  ScriptedRun r{{"p10", "p11", "p12", "p13", "p14", "p15"}, {"a", "b", "c", "d", "e", "f"}, {}};
  r.scores[kInitial.text] = 0;
  for (const auto& c : r.candidates) r.scores[c] = 0;
  const auto order = [&](std::uint64_t seed) {
    TunerConfig c = logical_config();
    c.seed = seed;
    std::vector<std::string> ids;
    for (const auto& e : r.run(twelve(), c).events) ids.push_back(e.passage_id);
    return ids;
  };
  EXPECT_EQ(order(1), order(1));
  EXPECT_NE(order(1), order(2));
}

TEST(ScoreInstruction, Cases) {
  const Corpus six = make_corpus("six", {{"p1", "r", "pos one", true}, {"p2", "r", "pos two", true},
                                         {"p3", "r", "pos three", true}, {"n1", "r", "neg one", false},
                                         {"n2", "r", "neg two", false}, {"n3", "r", "neg three", false}});
  const auto score = [&](std::vector<std::string> wrong) {
    auto gw = testing::gateway_with(std::make_shared<FnBackend>(testing::gold_answers(six, std::move(wrong))));
    return score_instruction(*gw, kInitial, SelectionPolicy::zero_shot(), six, 1);
  };
  EXPECT_DOUBLE_EQ(score({}), 1.0);
  EXPECT_DOUBLE_EQ(score({"pos one", "pos two", "pos three"}), 0.0);
  EXPECT_NEAR(score({"pos two"}), 0.8, 1e-12);
}

TEST(Tune, DefaultScorerUsesTrainingF1) {
  // Under the initial instruction "neg one" is called positive; the rewrite
  // fixes it, so training F1 rises from 6/7 to 1.
  const Corpus six = make_corpus("six", {{"p1", "r", "pos one", true}, {"p2", "r", "pos two", true},
                                         {"p3", "r", "pos three", true}, {"n1", "r", "neg one", false},
                                         {"n2", "r", "neg two", false}, {"n3", "r", "neg three", false}});
  auto backend = std::make_shared<FnBackend>(tuning_backend(
      [](const std::string& system, const std::string& passage) {
        if (passage == "neg one") return std::string(system == "Better." ? "False" : "True");
        return std::string(passage.rfind("pos", 0) == 0 ? "True" : "False");
      },
      [] { return "Too eager."; }, [] { return "Better."; }));
  auto gw = testing::gateway_with(backend);
  const TuneResult r = tune(*gw, kInitial, six, logical_config());
  EXPECT_NEAR(r.initial_train_f1, 6.0 / 7.0, 1e-12);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_TRUE(r.events[0].accepted);
  EXPECT_DOUBLE_EQ(r.final_train_f1, 1.0);
  EXPECT_EQ(r.final_instruction.text, "Better.");
}

TEST(Evolution, Rendering) {
  testing::TempDir dir;
  TuneResult none;
  none.initial_instruction = kInitial;
  none.final_instruction = kInitial;
  export_evolution(none, dir / "none.txt");
  EXPECT_EQ(read_final_instruction(dir / "none.txt"), kInitial.text);

  ScriptedRun three{{"p10", "p11", "p12"}, {"A", "B\nsecond line", "C"},
                    {{kInitial.text, 0.1}, {"A", 0.2}, {"B\nsecond line", 0.3}, {"C", 0.4}}};
  const TuneResult r = three.run(twelve(), logical_config());
  const std::string log = render_evolution(r);
  EXPECT_NE(log.find("\n1. accepted"), std::string::npos);
  EXPECT_NE(log.find("\n2. accepted"), std::string::npos);
  EXPECT_NE(log.find("\n3. accepted"), std::string::npos);
  EXPECT_EQ(log.find("\n4. "), std::string::npos);
  export_evolution(r, dir / "three.txt");
  EXPECT_EQ(read_final_instruction(dir / "three.txt"), r.final_instruction.text);
  write_file_atomic(dir / "bad.txt", "no marker here\n");
  EXPECT_THROW(read_final_instruction(dir / "bad.txt"), LoadError);
}

TEST(Evolution, EventJson) {
  ScriptedRun r{{"p10"}, {"A"}, {{kInitial.text, 0.5}, {"A", 0.9}}};
  const TuneResult result = r.run(twelve(), logical_config());
  const auto j = nlohmann::json::parse(events_to_jsonl(result.events));
  EXPECT_EQ(j.at("passage_id"), "p10");
  EXPECT_EQ(j.at("candidate_instruction").at("origin"), "tuned");
  EXPECT_EQ(j.at("accepted"), true);
  EXPECT_EQ(j.at("timestamp"), "1970-01-01T00:00:00Z");
  EXPECT_EQ(to_json(result).at("accepted"), 1);
}

}  // namespace
}  // namespace iclopt
