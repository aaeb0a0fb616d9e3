#include <memory>

#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "iclopt/backends.hpp"
#include "iclopt/evaluation.hpp"
#include "iclopt/gateway.hpp"
#include "iclopt/prompting.hpp"
#include "iclopt/templates.hpp"

namespace iclopt {
namespace {

// Answers from a lookup so the gateway and scoring path dominate.
class GoldBackend final : public ChatBackend {
 public:
  explicit GoldBackend(const Corpus& c) : corpus_(c) {}
  std::string complete(const ChatRequest& r) override {
    const auto& text = r.messages.back().content;
    for (const auto& p : corpus_) {
      if (p.text == text) return std::string(render_label(p.label));
    }
    return "False";
  }

 private:
  const Corpus& corpus_;
};

void BM_MetricsFromConfusion(benchmark::State& state) {
  ConfusionMatrix cm;
  cm.tp = 40, cm.fp = 7, cm.fn = 9, cm.tn = 144;
  for (auto _ : state) benchmark::DoNotOptimize(metrics_from_confusion(cm));
}
BENCHMARK(BM_MetricsFromConfusion);

void BM_EvaluateZeroShot(benchmark::State& state) {
  const Corpus data = bench::random_corpus(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    GatewayOptions options;
    options.cache_enabled = false;
    Gateway gw(std::make_shared<GoldBackend>(data), nullptr, options);
    EvalOptions eval;
    eval.repeats = 7;
    eval.train = &data;
    benchmark::DoNotOptimize(evaluate(gw, builtin_templates().simple, SelectionPolicy::zero_shot(), data, eval));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 7);
}
BENCHMARK(BM_EvaluateZeroShot)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace iclopt
