#include <benchmark/benchmark.h>

#include "iclopt/prompting.hpp"
#include "iclopt/templates.hpp"

namespace {

void BM_AssembleStaticPrompt(benchmark::State& state) {
  const auto& t = iclopt::builtin_templates();
  for (auto _ : state) {
    auto m = iclopt::assemble_classification_prompt(t.expert, t.static_demos, "We target net zero by 2050.");
    benchmark::DoNotOptimize(m);
  }
}
BENCHMARK(BM_AssembleStaticPrompt);

void BM_ParseLabel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(iclopt::parse_label("  \"True.\"\n"));
}
BENCHMARK(BM_ParseLabel);

}  // namespace

BENCHMARK_MAIN();
