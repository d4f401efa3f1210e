#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "dlmspec/core.hpp"
#include "dlmspec/harness/corpus.hpp"
#include "dlmspec/models.hpp"
#include "json.hpp"

namespace dlmspec::harness {

using nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

// Byte-mode tokens may be fragments of multi-byte characters, so they are
// stored as byte values rather than JSON strings.
inline json vocabulary_to_json(const Vocabulary& v, Tokenization mode) {
  json j;
  j["format"] = "dlmspec-vocab";
  j["version"] = kModelFormatVersion;
  j["tokenization"] = to_string(mode);
  json toks = json::array();
  for (TokenId id = Vocabulary::kFirstWord; id < static_cast<TokenId>(v.size()); ++id) {
    const auto& t = v.token(id);
    if (mode == Tokenization::kByte) {
      toks.push_back(static_cast<int>(static_cast<unsigned char>(t.at(0))));
    } else {
      toks.push_back(t);
    }
  }
  j["tokens"] = std::move(toks);
  return j;
}

inline void check_version(const json& j, const std::string& format) {
  if (j.value("format", std::string{}) != format) throw Error("not a " + format + " file");
  if (j.value("version", -1) != kModelFormatVersion)
    throw Error("unsupported " + format + " version " + std::to_string(j.value("version", -1)));
}

inline std::pair<Vocabulary, Tokenization> vocabulary_from_json(const json& j) {
  check_version(j, "dlmspec-vocab");
  const auto mode = parse_tokenization(j.at("tokenization").get<std::string>());
  Vocabulary v;
  for (const auto& t : j.at("tokens")) {
    if (mode == Tokenization::kByte) {
      v.add(std::string(1, static_cast<char>(t.get<int>())));
    } else {
      v.add(t.get<std::string>());
    }
  }
  return {std::move(v), mode};
}

/// Count table rows are [context..., next, count], sorted for byte-stable output.
inline json ngram_to_json(const NGramModel& m) {
  json j;
  j["format"] = "dlmspec-ngram";
  j["version"] = kModelFormatVersion;
  j["order"] = m.order();
  j["k_add"] = m.k_add();
  j["vocab_size"] = m.vocab_size();
  std::vector<std::vector<std::uint64_t>> rows;
  for (const auto& [ctx, cc] : m.table())
    for (const auto& [next, count] : cc.next) {
      std::vector<std::uint64_t> row;
      for (TokenId id : ctx) row.push_back(static_cast<std::uint64_t>(id));
      row.push_back(static_cast<std::uint64_t>(next));
      row.push_back(count);
      rows.push_back(std::move(row));
    }
  std::sort(rows.begin(), rows.end());
  j["counts"] = rows;
  return j;
}

inline NGramModel ngram_from_json(const json& j) {
  check_version(j, "dlmspec-ngram");
  const int order = j.at("order").get<int>();
  const double k_add = j.at("k_add").get<double>();
  const auto vocab_size = j.at("vocab_size").get<std::size_t>();
  NGramModel::Table table;
  const auto ctx_len = static_cast<std::size_t>(order - 1);
  for (const auto& row : j.at("counts")) {
    if (row.size() != ctx_len + 2) throw Error("malformed count row");
    Sequence ctx;
    for (std::size_t i = 0; i < ctx_len; ++i) ctx.push_back(row[i].get<TokenId>());
    const auto next = row[ctx_len].get<TokenId>();
    const auto count = row[ctx_len + 1].get<std::uint64_t>();
    auto& cc = table[ctx];
    cc.next.emplace_back(next, count);
    cc.total += count;
  }
  for (auto& [ctx, cc] : table) std::sort(cc.next.begin(), cc.next.end());
  return NGramModel(order, k_add, vocab_size, std::move(table));
}

inline json denoiser_to_json(const BidirectionalDenoiser& d) {
  json j;
  j["format"] = "dlmspec-denoiser";
  j["version"] = kModelFormatVersion;
  j["w_bi"] = d.w_bi();
  j["max_distance"] = d.max_distance();
  json fwd = json::array(), bwd = json::array();
  for (const auto& m : d.forward_tables()) fwd.push_back(ngram_to_json(m));
  for (const auto& m : d.backward_tables()) bwd.push_back(ngram_to_json(m));
  j["forward"] = std::move(fwd);
  j["backward"] = std::move(bwd);
  return j;
}

inline BidirectionalDenoiser denoiser_from_json(const json& j) {
  check_version(j, "dlmspec-denoiser");
  std::vector<NGramModel> fwd, bwd;
  for (const auto& m : j.at("forward")) fwd.push_back(ngram_from_json(m));
  for (const auto& m : j.at("backward")) bwd.push_back(ngram_from_json(m));
  if (fwd.size() != j.at("max_distance").get<std::size_t>()) throw Error("denoiser distance tables missing");
  return BidirectionalDenoiser(std::move(fwd), std::move(bwd), j.at("w_bi").get<double>());
}

}  // namespace dlmspec::harness
