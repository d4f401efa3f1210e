#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dlmspec/harness/config.hpp"
#include "dlmspec/metrics.hpp"
#include "dlmspec/specdec.hpp"
#include "json.hpp"

namespace dlmspec::harness {

using nlohmann::json;

inline constexpr int kTraceSchemaVersion = 1;

// Probabilities may be exactly zero; JSON has no -inf, so log-scores are not stored.
inline json step_to_json(const StepRecord& r, std::size_t prompt_index, const std::string& hash) {
  json j;
  j["schema"] = kTraceSchemaVersion;
  j["config_hash"] = hash;
  j["prompt"] = prompt_index;
  j["t"] = r.t;
  j["k"] = r.k;
  j["draft"] = r.draft;
  j["path"] = r.path;
  j["path_score"] = r.path_score;
  j["accept_bits"] = r.accept_bits;
  j["l_acc"] = r.l_acc;
  j["l_gen"] = r.l_gen;
  j["replacement"] = r.replacement ? json(*r.replacement) : json(nullptr);
  j["q_scores"] = r.q_scores;
  j["p_scores"] = r.p_scores;
  j["target_passes"] = r.target_passes;
  j["drafter_passes"] = r.drafter_passes;
  j["cps_expansions"] = r.cps_expansions;
  j["ema_gen"] = r.adl.ema_gen;
  j["ema_acc"] = r.adl.ema_acc;
  j["k_next"] = r.adl.k_next;
  j["terminated"] = r.terminated;
  return j;
}

struct TraceLine {
  std::size_t prompt = 0;
  std::string config_hash;
  StepRecord record;
};

inline TraceLine step_from_json(const json& j) {
  const int v = j.value("schema", -1);
  if (v != kTraceSchemaVersion) throw Error("unsupported trace schema version " + std::to_string(v));
  TraceLine out;
  out.prompt = j.at("prompt").get<std::size_t>();
  out.config_hash = j.at("config_hash").get<std::string>();
  auto& r = out.record;
  r.t = j.at("t").get<std::size_t>();
  r.k = j.at("k").get<int>();
  r.draft = j.at("draft").get<Sequence>();
  r.path = j.at("path").get<Sequence>();
  r.path_score = j.at("path_score").get<double>();
  r.accept_bits = j.at("accept_bits").get<std::vector<int>>();
  r.l_acc = j.at("l_acc").get<int>();
  r.l_gen = j.at("l_gen").get<int>();
  if (!j.at("replacement").is_null()) r.replacement = j.at("replacement").get<TokenId>();
  r.q_scores = j.at("q_scores").get<std::vector<double>>();
  r.p_scores = j.at("p_scores").get<std::vector<double>>();
  r.target_passes = j.at("target_passes").get<std::uint64_t>();
  r.drafter_passes = j.at("drafter_passes").get<std::uint64_t>();
  r.cps_expansions = j.at("cps_expansions").get<std::uint64_t>();
  r.adl.ema_gen = j.at("ema_gen").get<double>();
  r.adl.ema_acc = j.at("ema_acc").get<double>();
  r.adl.k_next = j.at("k_next").get<int>();
  r.terminated = j.at("terminated").get<bool>();
  return out;
}

inline std::string traces_to_jsonl(const std::vector<Trace>& traces, const std::string& hash) {
  std::string out;
  for (std::size_t i = 0; i < traces.size(); ++i)
    for (const auto& r : traces[i]) {
      out += step_to_json(r, i, hash).dump();
      out += '\n';
    }
  return out;
}

/// Groups lines back into per-prompt traces (prompt indices must be dense from 0).
inline std::vector<Trace> traces_from_jsonl(const std::string& text) {
  std::vector<Trace> traces;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto tl = step_from_json(json::parse(line));
    if (tl.prompt >= traces.size()) traces.resize(tl.prompt + 1);
    traces[tl.prompt].push_back(std::move(tl.record));
  }
  return traces;
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

inline json summary_to_json(const RunSummary& s) {
  json tasks = json::object();
  for (const auto& [name, t] : s.tasks) tasks[name] = {{"mat", t.mat}, {"speedup", t.speedup}, {"prompts", t.prompts}};
  json by_k = json::array();
  for (const auto& [k, a] : s.by_k)
    by_k.push_back({{"k", k}, {"steps", a.steps}, {"mean_l_acc", a.mean_l_acc}, {"mean_path_len", a.mean_path_len}});
  const double total = s.cost.total();
  return json{{"mat", s.mat},
              {"speedup", s.speedup},
              {"prompts", s.prompts},
              {"steps", s.steps},
              {"tokens", s.tokens},
              {"cost", {{"draft", s.cost.draft}, {"verify", s.cost.verify}, {"cps", s.cost.cps}, {"total", total}}},
              {"cost_share",
               {{"draft", total > 0 ? s.cost.draft / total : 0.0},
                {"verify", total > 0 ? s.cost.verify / total : 0.0},
                {"cps", total > 0 ? s.cost.cps / total : 0.0}}},
              {"tasks", tasks},
              {"acceptance_by_k", by_k}};
}

inline const char* kSummaryCsvHeader = "config_hash,label,mat,speedup,prompts,steps,tokens,cost_draft,cost_verify,cost_cps";

inline std::string summary_csv_row(const std::string& hash, const std::string& label, const RunSummary& s) {
  return hash + "," + label + "," + fmt(s.mat) + "," + fmt(s.speedup) + "," + std::to_string(s.prompts) + "," +
         std::to_string(s.steps) + "," + std::to_string(s.tokens) + "," + fmt(s.cost.draft) + "," +
         fmt(s.cost.verify) + "," + fmt(s.cost.cps);
}

}  // namespace dlmspec::harness
