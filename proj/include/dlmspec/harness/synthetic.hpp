#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dlmspec/core.hpp"

namespace dlmspec::harness {

/// Parameters of a random second-order Markov text source.
///
/// Each word has a small successor set keyed on the previous word; the
/// weights within that set are perturbed by the word before it, so a trigram
/// model fits the source better than a bigram one.
struct SyntheticSpec {
  std::size_t words = 300;
  std::size_t successors = 6;
  double zipf = 1.2;
  double eos_prob = 0.04;
  std::size_t min_len = 6;
  std::size_t max_len = 60;
};

namespace detail {

inline std::uint64_t h3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return Rng::mix(Rng::mix(Rng::mix(a) ^ b) ^ c);
}

inline double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace detail

inline std::vector<std::string> synthetic_corpus(std::uint64_t seed, std::size_t documents,
                                                 const SyntheticSpec& spec = {}) {
  if (spec.words < 2 || spec.successors < 1) throw Error("synthetic source too small");
  Rng rng = Rng(seed).substream("synthetic");
  const std::uint64_t start = spec.words;  // pseudo-word for the document start
  std::vector<std::string> lines;
  lines.reserve(documents);
  std::vector<double> w(spec.successors);
  for (std::size_t d = 0; d < documents; ++d) {
    std::string line;
    std::uint64_t prev2 = start, prev1 = start;
    for (std::size_t n = 0; n < spec.max_len; ++n) {
      if (n >= spec.min_len && rng.uniform() < spec.eos_prob) break;
      for (std::size_t j = 0; j < spec.successors; ++j) {
        const double base = 1.0 / std::pow(static_cast<double>(j + 1), spec.zipf);
        const double jitter = 0.25 + 1.5 * detail::unit(detail::h3(seed ^ 0x7f4a7c15ULL, prev2 * 131 + prev1, j));
        w[j] = base * jitter;
      }
      const auto pick = static_cast<std::size_t>(sample_probs(w, rng));
      const std::uint64_t word = detail::h3(seed, prev1, pick) % spec.words;
      if (!line.empty()) line += ' ';
      line += "w" + std::to_string(word);
      prev2 = prev1;
      prev1 = word;
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace dlmspec::harness
