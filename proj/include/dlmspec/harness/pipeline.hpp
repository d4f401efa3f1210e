#pragma once

#include <string>
#include <vector>

#include "dlmspec/harness/config.hpp"
#include "dlmspec/harness/corpus.hpp"
#include "dlmspec/metrics.hpp"
#include "dlmspec/models.hpp"

namespace dlmspec::harness {

/// Everything a benchmark run needs, fitted on the training split only.
struct Workbench {
  Vocabulary vocab;
  Tokenization mode = Tokenization::kWhitespace;
  Split split;
  NGramModel target;
  NGramModel proxy;
  BidirectionalDenoiser denoiser;

  BenchModels models() const { return {&target, &denoiser, &proxy}; }
};

inline std::vector<std::string> train_lines(const std::vector<std::string>& lines, double test_fraction) {
  const auto n = static_cast<std::size_t>(static_cast<double>(lines.size()) * (1.0 - test_fraction));
  return {lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(n)};
}

inline BidirectionalDenoiser train_denoiser(const std::vector<Sequence>& docs, std::size_t vocab_size,
                                            const ModelSettings& m) {
  return BidirectionalDenoiser::train(docs, m.denoiser_order, m.k_add, vocab_size, m.w_bi,
                                      static_cast<std::size_t>(m.denoiser_distance), m.denoiser_pad_eos);
}

/// Vocabulary from the training lines; blank-after-encoding documents are dropped
/// before the split, so the split is by surviving document index.
inline Workbench prepare(const std::vector<std::string>& lines, const RunConfig& cfg) {
  Workbench w;
  w.mode = cfg.tokenization;
  w.vocab = build_vocabulary(train_lines(lines, cfg.test_fraction), cfg.tokenization);
  const auto corpus = encode_corpus(lines, w.vocab, cfg.tokenization);
  w.split = split_by_index(corpus.documents, cfg.test_fraction);
  const auto& m = cfg.models;
  w.target = NGramModel::train(w.split.train, m.target_order, m.k_add, w.vocab.size());
  w.proxy = NGramModel::train(w.split.train, m.proxy_order, m.k_add, w.vocab.size());
  w.denoiser = train_denoiser(w.split.train, w.vocab.size(), m);
  return w;
}

/// First prompt_len tokens of held-out documents that continue past the prompt.
inline std::vector<Prompt> heldout_prompts(const std::vector<Sequence>& test, const BenchSettings& b,
                                           const std::string& task = "heldout") {
  std::vector<Prompt> out;
  for (const auto& d : test) {
    if (out.size() >= b.max_prompts) break;
    if (d.size() <= b.prompt_len) continue;
    out.push_back({task, Sequence(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(b.prompt_len))});
  }
  return out;
}

/// Prompt file lines are either "text" or "task<TAB>text".
inline std::vector<Prompt> parse_prompts(const std::vector<std::string>& lines, const Vocabulary& vocab,
                                         Tokenization mode) {
  std::vector<Prompt> out;
  for (const auto& line : lines) {
    Prompt p;
    std::string text = line;
    if (const auto tab = line.find('\t'); tab != std::string::npos) {
      p.task = line.substr(0, tab);
      text = line.substr(tab + 1);
    } else {
      p.task = "default";
    }
    p.ids = encode(text, vocab, mode);
    if (p.ids.empty()) throw Error("empty prompt: " + line);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dlmspec::harness
