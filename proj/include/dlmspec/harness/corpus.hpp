#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dlmspec/core.hpp"

namespace dlmspec::harness {

enum class Tokenization { kWhitespace, kByte };

inline Tokenization parse_tokenization(const std::string& s) {
  if (s == "whitespace") return Tokenization::kWhitespace;
  if (s == "byte") return Tokenization::kByte;
  throw Error("unknown tokenization: " + s);
}

inline std::string to_string(Tokenization t) { return t == Tokenization::kByte ? "byte" : "whitespace"; }

inline std::vector<std::string> split_tokens(const std::string& line, Tokenization mode) {
  std::vector<std::string> out;
  if (mode == Tokenization::kByte) {
    for (char c : line) out.emplace_back(1, c);
    return out;
  }
  std::istringstream in(line);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::string detokenize(const Sequence& ids, const Vocabulary& vocab, Tokenization mode) {
  std::string out;
  for (TokenId id : ids) {
    if (id == Vocabulary::kEos) break;
    if (mode == Tokenization::kWhitespace && !out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

/// Non-blank lines of a UTF-8 text file.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

struct Corpus {
  Tokenization mode = Tokenization::kWhitespace;
  std::vector<Sequence> documents;
};

inline Vocabulary build_vocabulary(const std::vector<std::string>& lines, Tokenization mode) {
  Vocabulary v;
  for (const auto& line : lines)
    for (const auto& tok : split_tokens(line, mode)) v.add(tok);
  return v;
}

inline Sequence encode(const std::string& line, const Vocabulary& vocab, Tokenization mode) {
  Sequence s;
  for (const auto& tok : split_tokens(line, mode)) s.push_back(vocab.id(tok));
  return s;
}

inline Corpus encode_corpus(const std::vector<std::string>& lines, const Vocabulary& vocab, Tokenization mode) {
  Corpus c;
  c.mode = mode;
  for (const auto& line : lines) {
    auto s = encode(line, vocab, mode);
    if (!s.empty()) c.documents.push_back(std::move(s));
  }
  return c;
}

/// Documents with index below floor(n * (1 - test_fraction)) train; the rest test.
struct Split {
  std::vector<Sequence> train;
  std::vector<Sequence> test;
};

inline Split split_by_index(const std::vector<Sequence>& docs, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw Error("test fraction must lie in [0, 1)");
  const auto n_train = static_cast<std::size_t>(static_cast<double>(docs.size()) * (1.0 - test_fraction));
  Split s;
  s.train.assign(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(docs.begin() + static_cast<std::ptrdiff_t>(n_train), docs.end());
  if (s.train.empty()) throw Error("empty corpus");
  return s;
}

}  // namespace dlmspec::harness
