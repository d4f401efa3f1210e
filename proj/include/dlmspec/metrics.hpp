#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dlmspec/core.hpp"
#include "dlmspec/specdec.hpp"

namespace dlmspec {

/// Simulated per-pass costs standing in for wall-clock time.
struct CostModel {
  double c_target = 1.0;    // one batched target verification pass
  double c_draft = 0.2;     // one drafter refinement pass
  double c_cps = 0.001;     // one beam expansion
  double c_ar_token = 1.0;  // one autoregressive target step

  void validate() const {
    if (c_target < 0 || c_draft < 0 || c_cps < 0 || c_ar_token < 0) throw Error("costs must be >= 0");
  }
};

struct CostBreakdown {
  double draft = 0.0;
  double verify = 0.0;
  double cps = 0.0;
  double total() const { return draft + verify + cps; }
};

inline CostBreakdown step_cost(const StepRecord& r, const CostModel& c) {
  return {static_cast<double>(r.drafter_passes) * c.c_draft, static_cast<double>(r.target_passes) * c.c_target,
          static_cast<double>(r.cps_expansions) * c.c_cps};
}

using Trace = std::vector<StepRecord>;

/// Mean accepted prefix length over every step of every trace.
inline double mat(std::span<const Trace> traces) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& tr : traces)
    for (const auto& r : tr) {
      sum += r.l_acc;
      ++n;
    }
  if (n == 0) throw Error("no steps to average");
  return sum / static_cast<double>(n);
}

inline std::uint64_t tokens_generated(std::span<const Trace> traces) {
  std::uint64_t n = 0;
  for (const auto& tr : traces)
    for (const auto& r : tr) n += r.committed();
  return n;
}

inline CostBreakdown total_cost(std::span<const Trace> traces, const CostModel& c) {
  CostBreakdown b;
  for (const auto& tr : traces)
    for (const auto& r : tr) {
      const auto s = step_cost(r, c);
      b.draft += s.draft;
      b.verify += s.verify;
      b.cps += s.cps;
    }
  return b;
}

/// Baseline autoregressive cost of the same output divided by the speculative cost.
inline double speedup(std::span<const Trace> traces, const CostModel& c) {
  c.validate();
  const double denom = total_cost(traces, c).total();
  if (!(denom > 0.0)) throw Error("zero speculative cost");
  return static_cast<double>(tokens_generated(traces)) * c.c_ar_token / denom;
}

struct AcceptanceAtK {
  std::uint64_t steps = 0;
  double mean_l_acc = 0.0;
  double mean_path_len = 0.0;
};

struct TaskSummary {
  double mat = 0.0;
  double speedup = 0.0;
  std::uint64_t prompts = 0;
};

struct RunSummary {
  double mat = 0.0;
  double speedup = 0.0;
  std::uint64_t prompts = 0;
  std::uint64_t steps = 0;
  std::uint64_t tokens = 0;
  CostBreakdown cost;
  std::map<std::string, TaskSummary> tasks;
  std::map<int, AcceptanceAtK> by_k;
};

struct Prompt {
  std::string task = "default";
  Sequence ids;
};

struct BenchModels {
  const NGramModel* target = nullptr;
  const BidirectionalDenoiser* denoiser = nullptr;
  const NGramModel* proxy = nullptr;
};

/// Per-prompt seed: a pure function of the global seed and the prompt index.
inline std::uint64_t prompt_seed(std::uint64_t seed, std::size_t index) {
  return Rng::mix(Rng::mix(seed) ^ Rng::mix(static_cast<std::uint64_t>(index) + 0xa0761d6478bd642fULL));
}

inline RunSummary summarize(std::span<const Prompt> prompts, std::span<const Trace> traces, const CostModel& c) {
  if (prompts.size() != traces.size()) throw Error("prompt/trace count mismatch");
  RunSummary s;
  s.prompts = prompts.size();
  s.mat = mat(traces);
  s.speedup = speedup(traces, c);
  s.cost = total_cost(traces, c);
  s.tokens = tokens_generated(traces);
  std::map<std::string, std::vector<Trace>> per_task;
  for (std::size_t i = 0; i < prompts.size(); ++i) per_task[prompts[i].task].push_back(traces[i]);
  for (const auto& [name, trs] : per_task) s.tasks[name] = {mat(trs), speedup(trs, c), trs.size()};
  for (const auto& tr : traces)
    for (const auto& r : tr) {
      ++s.steps;
      auto& a = s.by_k[r.k];
      ++a.steps;
      a.mean_l_acc += r.l_acc;
      a.mean_path_len += static_cast<double>(r.path.size());
    }
  for (auto& [k, a] : s.by_k) {
    a.mean_l_acc /= static_cast<double>(a.steps);
    a.mean_path_len /= static_cast<double>(a.steps);
  }
  return s;
}

inline std::vector<DecodeResult> run_decodes(const BenchModels& m, std::span<const Prompt> prompts,
                                             const EngineConfig& cfg) {
  std::vector<DecodeResult> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    EngineConfig c = cfg;
    c.seed = prompt_seed(cfg.seed, i);
    out.push_back(decode(*m.target, *m.denoiser, *m.proxy, prompts[i].ids, c));
  }
  return out;
}

inline RunSummary run_bench(const BenchModels& m, std::span<const Prompt> prompts, const EngineConfig& cfg,
                            const CostModel& cost, std::vector<Trace>* traces_out = nullptr) {
  if (prompts.empty()) throw Error("no prompts");
  auto results = run_decodes(m, prompts, cfg);
  std::vector<Trace> traces;
  traces.reserve(results.size());
  for (auto& r : results) traces.push_back(std::move(r.trace));
  auto s = summarize(prompts, traces, cost);
  if (traces_out) *traces_out = std::move(traces);
  return s;
}

struct AblationRow {
  bool cps = false;
  bool adl = false;
  RunSummary summary;
};

/// The four {CPS, ADL} on/off cells; ADL off means a fixed k = k_max.
inline std::vector<AblationRow> ablate(const BenchModels& m, std::span<const Prompt> prompts, const EngineConfig& base,
                                       const CostModel& cost) {
  std::vector<AblationRow> rows;
  for (bool cps : {true, false})
    for (bool adl : {true, false}) {
      EngineConfig c = base;
      c.use_cps = cps;
      c.use_adl = adl;
      c.fixed_k = 0;
      rows.push_back({cps, adl, run_bench(m, prompts, c, cost)});
    }
  return rows;
}

enum class Knob { kSteps, kBeam, kMMax, kTau, kFixedK };

inline Knob parse_knob(const std::string& s) {
  if (s == "S" || s == "steps") return Knob::kSteps;
  if (s == "B" || s == "beam") return Knob::kBeam;
  if (s == "M_max" || s == "m-max" || s == "m_max") return Knob::kMMax;
  if (s == "tau") return Knob::kTau;
  if (s == "fixed-k" || s == "k") return Knob::kFixedK;
  throw Error("unknown sweep knob: " + s);
}

inline std::string knob_name(Knob k) {
  switch (k) {
    case Knob::kSteps: return "S";
    case Knob::kBeam: return "B";
    case Knob::kMMax: return "M_max";
    case Knob::kTau: return "tau";
    case Knob::kFixedK: return "fixed-k";
  }
  return "?";
}

struct SweepRow {
  std::string label;  // knob value, or "ADL" for the adaptive reference row
  double value = 0.0;
  RunSummary summary;
};

inline EngineConfig with_knob(EngineConfig c, Knob knob, double v) {
  switch (knob) {
    case Knob::kSteps: c.drafter.steps = static_cast<int>(v); break;
    case Knob::kBeam: c.cps.beam = static_cast<std::size_t>(v); break;
    case Knob::kMMax: c.cps.prune.m_max = static_cast<std::size_t>(v); break;
    case Knob::kTau: c.cps.prune.tau = v; break;
    case Knob::kFixedK:
      c.use_adl = false;
      c.fixed_k = static_cast<int>(v);
      break;
  }
  return c;
}

inline std::string format_value(double v) {
  if (v == static_cast<double>(static_cast<long long>(v))) return std::to_string(static_cast<long long>(v));
  std::string s = std::to_string(v);
  while (!s.empty() && s.back() == '0') s.pop_back();
  return s;
}

/// One row per knob value; a fixed-k sweep adds a trailing adaptive row.
inline std::vector<SweepRow> sweep(const BenchModels& m, std::span<const Prompt> prompts, const EngineConfig& base,
                                   const CostModel& cost, Knob knob, std::span<const double> values) {
  std::vector<SweepRow> rows;
  for (double v : values) rows.push_back({format_value(v), v, run_bench(m, prompts, with_knob(base, knob, v), cost)});
  if (knob == Knob::kFixedK) {
    EngineConfig c = base;
    c.use_adl = true;
    rows.push_back({"ADL", 0.0, run_bench(m, prompts, c, cost)});
  }
  return rows;
}

}  // namespace dlmspec
