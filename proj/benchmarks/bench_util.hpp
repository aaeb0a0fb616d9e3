#pragma once

#include <string>
#include <vector>

#include "iclopt/corpus.hpp"
#include "iclopt/random.hpp"

namespace iclopt::bench {

inline Corpus random_corpus(std::size_t n, std::uint64_t seed) {
  static const char* kWords[] = {"net",   "zero",   "carbon", "emissions", "2030",   "2050",     "target", "reduce",
                                 "coal",  "scope",  "energy", "portfolio", "commit", "strategy", "fund",   "climate"};
  Rng rng(seed);
  std::vector<Passage> passages;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text = "p" + std::to_string(i);
    for (std::size_t w = 0; w < 6 + rng.below(20); ++w) text += std::string(" ") + kWords[rng.below(16)];
    passages.push_back({"id" + std::to_string(i), "r" + std::to_string(i % 12), text, rng.below(3) == 0});
  }
  return Corpus("bench", std::move(passages));
}

}  // namespace iclopt::bench
