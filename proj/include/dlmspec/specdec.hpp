#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlmspec/adl.hpp"
#include "dlmspec/core.hpp"
#include "dlmspec/cps.hpp"
#include "dlmspec/drafter.hpp"
#include "dlmspec/models.hpp"

namespace dlmspec {

enum class Mode { kStochastic, kGreedy };

/// Which distribution plays q in the acceptance ratio (stochastic mode).
enum class AcceptanceQ {
  kProposal,  // point mass on the selected path token: the path is a deterministic proposal
  kL2r,       // left-to-right drafter proxy; unbiased only if path tokens are drawn from it
};

struct DrafterSettings {
  int steps = 1;
  int top_k = 1;
  bool l2r_uses_past_block = false;
};

struct EngineConfig {
  Mode mode = Mode::kGreedy;
  std::size_t max_output_len = 64;
  bool use_cps = true;
  bool use_adl = true;
  int fixed_k = 0;  // draft length with ADL off; 0 means k_max
  CpsConfig cps;
  AdlConfig adl;
  DrafterSettings drafter;
  AcceptanceQ accept_q = AcceptanceQ::kProposal;
  std::uint64_t seed = 0;
};

struct StepRecord {
  std::size_t t = 0;
  int k = 0;
  Sequence draft;
  Sequence path;
  double path_score = 0.0;
  std::vector<int> accept_bits;  // evaluated positions only; stops at the first rejection
  int l_acc = 0;
  int l_gen = 0;
  std::optional<TokenId> replacement;
  std::vector<double> q_scores;  // q^L2R(path_i)
  std::vector<double> p_scores;  // p_target(path_i | prefix, path_<i), evaluated positions
  std::uint64_t target_passes = 0;
  std::uint64_t drafter_passes = 0;
  std::uint64_t cps_expansions = 0;
  AdlState adl;  // controller state after this step
  bool terminated = false;

  std::size_t committed() const { return static_cast<std::size_t>(l_acc) + (replacement ? 1 : 0); }
};

struct DecodeResult {
  Sequence output;  // prompt followed by generated tokens
  std::size_t prompt_len = 0;
  std::vector<StepRecord> trace;
  bool truncated = false;

  Sequence generated() const {
    return Sequence(output.begin() + static_cast<std::ptrdiff_t>(prompt_len), output.end());
  }
};

/// min(1, p / q).
inline double acceptance_ratio(double p, double q) {
  if (p < 0.0) throw Error("target probability must be >= 0");
  if (!(q > 0.0)) throw Error("draft token has zero drafter probability");
  return std::min(1.0, p / q);
}

/// Draw from [p - q]_+ renormalized; falls back to p when that mass is negligible.
inline TokenId residual_sample(const Categorical& p, const Categorical& q, Rng& rng) {
  if (p.size() != q.size()) throw Error("residual over mismatched vocabularies");
  const auto pp = p.probs();
  const auto qq = q.probs();
  std::vector<double> r(pp.size());
  double mass = 0.0;
  for (std::size_t v = 0; v < r.size(); ++v) {
    r[v] = std::max(pp[v] - qq[v], 0.0);
    mass += r[v];
  }
  if (mass < 1e-12) return sample_probs(pp, rng);
  return sample_probs(r, rng);
}

struct VerifyResult {
  Sequence accepted;
  std::optional<TokenId> replacement;
  std::vector<int> bits;
  std::vector<double> p_scores;
};

/// Left-to-right verification of a drafted path against the target.
///
/// All target conditionals along the path are formed up front (one batched
/// pass). Stochastic mode accepts token i with probability min(1, p/q) and
/// on the first rejection draws the replacement from the residual. Greedy mode
/// accepts while the token equals the target argmax and commits that argmax
/// on the first mismatch.
inline VerifyResult verify_block(const NGramModel& target, const Sequence& prefix, const Sequence& path,
                                 const std::vector<Categorical>& q, Mode mode, Rng& coins, Rng& residual) {
  if (mode == Mode::kStochastic && q.size() < path.size()) throw Error("missing drafter distributions");
  std::vector<Categorical> p;
  p.reserve(path.size());
  Sequence hist = prefix;
  for (TokenId tok : path) {
    p.push_back(target.conditional(hist));
    hist.push_back(tok);
  }

  VerifyResult out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const TokenId tok = path[i];
    out.p_scores.push_back(p[i].prob(tok));
    bool ok;
    if (mode == Mode::kGreedy) {
      ok = argmax(p[i]) == tok;
      if (!ok) out.replacement = argmax(p[i]);
    } else {
      const double alpha = acceptance_ratio(p[i].prob(tok), q[i].prob(tok));
      ok = coins.uniform() < alpha;
      if (!ok) out.replacement = residual_sample(p[i], q[i], residual);
    }
    out.bits.push_back(ok ? 1 : 0);
    if (!ok) break;
    out.accepted.push_back(tok);
  }
  return out;
}

/// Draft length for the next step before clipping to the remaining budget.
inline int planned_draft_length(const EngineConfig& cfg, const AdlState& s) {
  if (cfg.use_adl) return s.k_next;
  return cfg.fixed_k > 0 ? cfg.fixed_k : cfg.adl.k_max;
}

/// The four-stage speculative loop: draft, path search, verify, adapt.
inline DecodeResult decode(const NGramModel& target, const BidirectionalDenoiser& denoiser, const NGramModel& proxy,
                           const Sequence& prompt, const EngineConfig& cfg) {
  if (prompt.empty()) throw Error("prompt must be non-empty");
  cfg.adl.validate();
  if (target.vocab_size() != denoiser.vocab_size() || target.vocab_size() != proxy.vocab_size())
    throw Error("models disagree on vocabulary size");

  const Rng root(cfg.seed);
  Rng coins = root.substream("accept");
  Rng residual = root.substream("residual");

  DecodeResult res;
  res.output = prompt;
  res.prompt_len = prompt.size();
  AdlState adl = AdlState::initial(cfg.adl);
  std::size_t generated = 0;
  bool done = false;

  for (std::size_t t = 1; !done && generated < cfg.max_output_len; ++t) {
    StepRecord rec;
    rec.t = t;
    const auto remaining = cfg.max_output_len - generated;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, planned_draft_length(cfg, adl))), remaining);
    rec.k = static_cast<int>(k);

    const auto rr = refine(denoiser, res.output, k, {cfg.drafter.steps, cfg.drafter.top_k, cfg.cps.prune.m_max});
    rec.draft = rr.state.draft();
    rec.drafter_passes = static_cast<std::uint64_t>(rr.state.step);

    Path path;
    if (cfg.use_cps) {
      SearchStats stats;
      path = beam_search(res.output, prune_lattice(rr.lattice, cfg.cps.prune), proxy, cfg.cps, &stats);
      rec.cps_expansions = stats.expansions;
    } else {
      path = argmax_path(res.output, rr.lattice, proxy, cfg.cps.lambda, cfg.cps.eos_stop);
    }
    rec.path = path.tokens;
    rec.path_score = path.score;

    std::vector<Categorical> q;
    q.reserve(path.tokens.size());
    for (std::size_t i = 1; i <= path.tokens.size(); ++i) {
      auto l2r = l2r_proxy(denoiser, res.output, path.tokens, k, i, cfg.drafter.l2r_uses_past_block);
      rec.q_scores.push_back(l2r.prob(path.tokens[i - 1]));
      q.push_back(cfg.accept_q == AcceptanceQ::kL2r ? std::move(l2r)
                                                    : Categorical::one_hot(target.vocab_size(), path.tokens[i - 1]));
    }

    auto vr = verify_block(target, res.output, path.tokens, q, cfg.mode, coins, residual);
    rec.target_passes = 1;
    rec.accept_bits = vr.bits;
    rec.p_scores = vr.p_scores;
    rec.l_acc = static_cast<int>(vr.accepted.size());
    rec.replacement = vr.replacement;

    for (TokenId tok : vr.accepted) res.output.push_back(tok);
    if (vr.replacement) res.output.push_back(*vr.replacement);
    generated += rec.committed();
    done = !res.output.empty() && res.output.size() > res.prompt_len && res.output.back() == Vocabulary::kEos;

    rec.l_gen = gen_signal(rec.draft, rec.k);
    if (!done) adl = update(adl, rec.l_gen, rec.l_acc, cfg.adl);
    rec.adl = adl;
    rec.terminated = done;
    res.trace.push_back(std::move(rec));
  }
  res.truncated = !done;
  return res;
}

/// Plain autoregressive greedy decoding of the target.
inline Sequence ar_greedy(const NGramModel& target, const Sequence& prompt, std::size_t max_output_len) {
  Sequence out = prompt;
  for (std::size_t n = 0; n < max_output_len; ++n) {
    const TokenId tok = argmax(target.conditional(out));
    out.push_back(tok);
    if (tok == Vocabulary::kEos) break;
  }
  return out;
}

/// Direct ancestral sampling from the target.
inline Sequence ancestral_sample(const NGramModel& target, const Sequence& prompt, std::size_t max_output_len,
                                 Rng& rng) {
  Sequence out = prompt;
  for (std::size_t n = 0; n < max_output_len; ++n) {
    const TokenId tok = sample(target.conditional(out), rng);
    out.push_back(tok);
    if (tok == Vocabulary::kEos) break;
  }
  return out;
}

}  // namespace dlmspec
