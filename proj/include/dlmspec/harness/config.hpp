#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "dlmspec/core.hpp"
#include "dlmspec/harness/corpus.hpp"
#include "dlmspec/metrics.hpp"
#include "dlmspec/specdec.hpp"
#include "json.hpp"

namespace dlmspec::harness {

using nlohmann::json;

struct ModelSettings {
  int target_order = 4;
  int proxy_order = 3;
  int denoiser_order = 2;
  double k_add = 0.1;
  double w_bi = 0.5;
  int denoiser_distance = 8;
  bool denoiser_pad_eos = false;
};

struct BenchSettings {
  std::size_t prompt_len = 4;
  std::size_t max_prompts = 200;
};

/// Fully resolved run configuration (file defaults, then CLI overrides).
struct RunConfig {
  std::uint64_t seed = 1;
  Tokenization tokenization = Tokenization::kWhitespace;
  double test_fraction = 0.1;
  ModelSettings models;
  EngineConfig engine;
  CostModel cost;
  BenchSettings bench;
};

inline std::string to_string(Mode m) { return m == Mode::kGreedy ? "greedy" : "stochastic"; }
inline Mode parse_mode(const std::string& s) {
  if (s == "greedy") return Mode::kGreedy;
  if (s == "stochastic") return Mode::kStochastic;
  throw Error("unknown mode: " + s);
}

inline std::string to_string(AcceptanceQ q) { return q == AcceptanceQ::kL2r ? "l2r" : "proposal"; }
inline AcceptanceQ parse_accept_q(const std::string& s) {
  if (s == "proposal") return AcceptanceQ::kProposal;
  if (s == "l2r") return AcceptanceQ::kL2r;
  throw Error("unknown acceptance distribution: " + s);
}

inline std::string to_string(MassMode m) { return m == MassMode::kRenormalized ? "renormalized" : "full"; }
inline MassMode parse_mass_mode(const std::string& s) {
  if (s == "full") return MassMode::kFullVocabulary;
  if (s == "renormalized") return MassMode::kRenormalized;
  throw Error("unknown mass mode: " + s);
}

inline std::string to_string(EosStop e) {
  switch (e) {
    case EosStop::kArgmax: return "argmax";
    case EosStop::kAny: return "any";
    case EosStop::kOff: return "off";
  }
  return "argmax";
}
inline EosStop parse_eos_stop(const std::string& s) {
  if (s == "argmax") return EosStop::kArgmax;
  if (s == "any") return EosStop::kAny;
  if (s == "off") return EosStop::kOff;
  throw Error("unknown eos stop rule: " + s);
}

inline std::string to_string(Selection s) { return s == Selection::kScore ? "score" : "prefix_mass"; }
inline Selection parse_selection(const std::string& s) {
  if (s == "prefix_mass") return Selection::kPrefixMass;
  if (s == "score") return Selection::kScore;
  throw Error("unknown path selection rule: " + s);
}

inline json to_json(const RunConfig& c) {
  const auto& e = c.engine;
  return json{
      {"seed", c.seed},
      {"tokenization", to_string(c.tokenization)},
      {"test_fraction", c.test_fraction},
      {"models",
       {{"target_order", c.models.target_order},
        {"proxy_order", c.models.proxy_order},
        {"denoiser_order", c.models.denoiser_order},
        {"k_add", c.models.k_add},
        {"w_bi", c.models.w_bi},
        {"denoiser_distance", c.models.denoiser_distance},
        {"denoiser_pad_eos", c.models.denoiser_pad_eos}}},
      {"engine",
       {{"mode", to_string(e.mode)},
        {"max_output_len", e.max_output_len},
        {"cps", e.use_cps},
        {"adl", e.use_adl},
        {"fixed_k", e.fixed_k},
        {"accept_q", to_string(e.accept_q)},
        {"beam", e.cps.beam},
        {"lambda", e.cps.lambda},
        {"tau", e.cps.prune.tau},
        {"m_max", e.cps.prune.m_max},
        {"keep_eos", e.cps.prune.keep_eos},
        {"mass_mode", to_string(e.cps.prune.mass_mode)},
        {"eos_stop", to_string(e.cps.eos_stop)},
        {"selection", to_string(e.cps.selection)},
        {"k_min", e.adl.k_min},
        {"k_max", e.adl.k_max},
        {"delta", e.adl.delta},
        {"rho", e.adl.rho},
        {"steps", e.drafter.steps},
        {"top_k_refine", e.drafter.top_k},
        {"l2r_uses_past_block", e.drafter.l2r_uses_past_block}}},
      {"cost",
       {{"c_target", c.cost.c_target},
        {"c_draft", c.cost.c_draft},
        {"c_cps", c.cost.c_cps},
        {"c_ar_token", c.cost.c_ar_token}}},
      {"bench", {{"prompt_len", c.bench.prompt_len}, {"max_prompts", c.bench.max_prompts}}},
  };
}

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(RunConfig& c, const json& j) {
  auto check_keys = [](const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw Error("config section " + where + " must be an object");
    for (const auto& [k, v] : obj.items()) {
      bool known = false;
      for (const char* key : keys) known = known || k == key;
      if (!known) throw Error("unknown config key " + where + "." + k);
    }
  };
  check_keys(j, {"seed", "tokenization", "test_fraction", "models", "engine", "cost", "bench"}, "");
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("tokenization")) c.tokenization = parse_tokenization(j["tokenization"].get<std::string>());
    if (j.contains("test_fraction")) c.test_fraction = j["test_fraction"].get<double>();
    if (j.contains("models")) {
      const auto& m = j["models"];
      check_keys(m, {"target_order", "proxy_order", "denoiser_order", "k_add", "w_bi", "denoiser_distance", "denoiser_pad_eos"},
                 "models");
      c.models.target_order = m.value("target_order", c.models.target_order);
      c.models.proxy_order = m.value("proxy_order", c.models.proxy_order);
      c.models.denoiser_order = m.value("denoiser_order", c.models.denoiser_order);
      c.models.k_add = m.value("k_add", c.models.k_add);
      c.models.w_bi = m.value("w_bi", c.models.w_bi);
      c.models.denoiser_distance = m.value("denoiser_distance", c.models.denoiser_distance);
      c.models.denoiser_pad_eos = m.value("denoiser_pad_eos", c.models.denoiser_pad_eos);
    }
    if (j.contains("engine")) {
      const auto& e = j["engine"];
      check_keys(e,
                 {"mode", "max_output_len", "cps", "adl", "fixed_k", "accept_q", "beam", "lambda", "tau", "m_max",
                  "keep_eos", "mass_mode", "eos_stop", "selection", "k_min", "k_max", "delta", "rho", "steps", "top_k_refine",
                  "l2r_uses_past_block"},
                 "engine");
      auto& g = c.engine;
      if (e.contains("mode")) g.mode = parse_mode(e["mode"].get<std::string>());
      g.max_output_len = e.value("max_output_len", g.max_output_len);
      g.use_cps = e.value("cps", g.use_cps);
      g.use_adl = e.value("adl", g.use_adl);
      g.fixed_k = e.value("fixed_k", g.fixed_k);
      if (e.contains("accept_q")) g.accept_q = parse_accept_q(e["accept_q"].get<std::string>());
      g.cps.beam = e.value("beam", g.cps.beam);
      g.cps.lambda = e.value("lambda", g.cps.lambda);
      g.cps.prune.tau = e.value("tau", g.cps.prune.tau);
      g.cps.prune.m_max = e.value("m_max", g.cps.prune.m_max);
      g.cps.prune.keep_eos = e.value("keep_eos", g.cps.prune.keep_eos);
      if (e.contains("mass_mode")) g.cps.prune.mass_mode = parse_mass_mode(e["mass_mode"].get<std::string>());
      if (e.contains("selection")) g.cps.selection = parse_selection(e["selection"].get<std::string>());
      if (e.contains("eos_stop")) g.cps.eos_stop = parse_eos_stop(e["eos_stop"].get<std::string>());
      g.adl.k_min = e.value("k_min", g.adl.k_min);
      g.adl.k_max = e.value("k_max", g.adl.k_max);
      g.adl.delta = e.value("delta", g.adl.delta);
      g.adl.rho = e.value("rho", g.adl.rho);
      g.drafter.steps = e.value("steps", g.drafter.steps);
      g.drafter.top_k = e.value("top_k_refine", g.drafter.top_k);
      g.drafter.l2r_uses_past_block = e.value("l2r_uses_past_block", g.drafter.l2r_uses_past_block);
    }
    if (j.contains("cost")) {
      const auto& k = j["cost"];
      check_keys(k, {"c_target", "c_draft", "c_cps", "c_ar_token"}, "cost");
      c.cost.c_target = k.value("c_target", c.cost.c_target);
      c.cost.c_draft = k.value("c_draft", c.cost.c_draft);
      c.cost.c_cps = k.value("c_cps", c.cost.c_cps);
      c.cost.c_ar_token = k.value("c_ar_token", c.cost.c_ar_token);
    }
    if (j.contains("bench")) {
      const auto& b = j["bench"];
      check_keys(b, {"prompt_len", "max_prompts"}, "bench");
      c.bench.prompt_len = b.value("prompt_len", c.bench.prompt_len);
      c.bench.max_prompts = b.value("max_prompts", c.bench.max_prompts);
    }
  } catch (const json::exception& ex) {
    throw Error(std::string("invalid config: ") + ex.what());
  }
}

inline void validate(const RunConfig& c) {
  c.engine.adl.validate();
  c.cost.validate();
  const auto& e = c.engine;
  if (e.cps.beam < 1) throw Error("beam must be >= 1");
  if (!(e.cps.lambda >= 0.0 && e.cps.lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  if (!(e.cps.prune.tau > 0.0 && e.cps.prune.tau <= 1.0)) throw Error("tau must lie in (0, 1]");
  if (e.cps.prune.m_max < 1) throw Error("m_max must be >= 1");
  if (e.drafter.steps < 1) throw Error("steps must be >= 1");
  if (e.drafter.top_k < 1) throw Error("top_k_refine must be >= 1");
  if (e.fixed_k < 0) throw Error("fixed_k must be >= 0");
  if (e.max_output_len < 1) throw Error("max_output_len must be >= 1");
  if (!(c.models.w_bi >= 0.0 && c.models.w_bi <= 1.0)) throw Error("w_bi must lie in [0, 1]");
  if (c.models.target_order < 1 || c.models.proxy_order < 1 || c.models.denoiser_order < 1)
    throw Error("n-gram orders must be >= 1");
  if (c.models.denoiser_distance < 1) throw Error("denoiser_distance must be >= 1");
  if (!(c.models.k_add > 0.0)) throw Error("k_add must be > 0");
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0)) throw Error("test_fraction must lie in [0, 1)");
  if (c.bench.prompt_len < 1) throw Error("prompt_len must be >= 1");
}

/// FNV-1a over the canonical (key-sorted) JSON rendering, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  const auto text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dlmspec::harness
