#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "dlmspec/core.hpp"
#include "dlmspec/models.hpp"

namespace dlmspec {

/// Forward corruption kernel: keep each token with probability 1 - eta,
/// otherwise replace it with a draw from the noise prior.
struct CorruptionConfig {
  double eta = 1.0;
  std::optional<Categorical> noise_prior;  // empty: point mass on the mask id
};

inline Sequence corrupt(const Sequence& x, const CorruptionConfig& cfg, Rng& rng) {
  if (!(cfg.eta >= 0.0 && cfg.eta <= 1.0)) throw Error("eta must lie in [0, 1]");
  std::vector<double> prior;
  if (cfg.noise_prior) prior = cfg.noise_prior->probs();
  Sequence out = x;
  for (auto& tok : out) {
    if (rng.uniform() >= cfg.eta) continue;
    tok = prior.empty() ? Vocabulary::kMask : sample_probs(prior, rng);
  }
  return out;
}

struct LatticeEntry {
  TokenId token = 0;
  double score = kNegInf;  // natural-log drafter probability
};

/// Candidates for one in-block position, best first (ties by lower id).
using LatticeColumn = std::vector<LatticeEntry>;

struct TokenLattice {
  std::size_t start = 0;  // absolute index of the first in-block position
  std::vector<LatticeColumn> columns;

  std::size_t size() const { return columns.size(); }
};

/// Top entries of a distribution sorted by (log-prob desc, id asc); zero-mass ids never appear.
inline LatticeColumn top_candidates(const Categorical& dist, std::size_t m_max) {
  LatticeColumn col;
  const auto& lp = dist.log_probs();
  for (std::size_t v = 0; v < lp.size(); ++v)
    if (lp[v] > kNegInf) col.push_back({static_cast<TokenId>(v), lp[v]});
  const auto keep = std::min(m_max, col.size());
  std::partial_sort(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(keep), col.end(),
                    [](const LatticeEntry& a, const LatticeEntry& b) {
                      return a.score != b.score ? a.score > b.score : a.token < b.token;
                    });
  col.resize(keep);
  return col;
}

struct RefineConfig {
  int steps = 1;         // S
  int top_k = 1;         // |U_s| on every round except the last
  std::size_t m_max = 15;
};

struct RefinementState {
  Sequence block;                       // prefix followed by the k in-block positions
  std::size_t prefix_len = 0;
  std::vector<std::size_t> masked;      // in-block offsets still masked (0-based)
  int step = 0;                         // rounds actually run
  std::vector<std::vector<std::size_t>> updates;  // U_s per round, in fill order
  std::vector<Categorical> final_conditionals;    // per offset, the lattice distributions

  /// The in-block tokens y^(S).
  Sequence draft() const {
    return Sequence(block.begin() + static_cast<std::ptrdiff_t>(prefix_len), block.end());
  }
};

struct RefineResult {
  RefinementState state;
  TokenLattice lattice;
};

/// Iterative refinement of an all-masked block, then lattice extraction.
///
/// Each round scores every still-masked position, fills the top_k most
/// confident ones (confidence = max probability; ties by position) with their
/// argmax, and the final round fills whatever is left. Lattice column i is the
/// conditional at i given the finished draft with only i re-masked.
inline RefineResult refine(const BidirectionalDenoiser& d, const Sequence& prefix, std::size_t k,
                           const RefineConfig& cfg) {
  if (k < 1) throw Error("draft length must be >= 1");
  if (cfg.steps < 1) throw Error("refinement steps must be >= 1");
  if (cfg.top_k < 1) throw Error("refinement top-k must be >= 1");
  if (cfg.m_max < 1) throw Error("m_max must be >= 1");

  RefineResult out;
  auto& st = out.state;
  st.prefix_len = prefix.size();
  st.block = prefix;
  st.block.resize(prefix.size() + k, Vocabulary::kMask);
  st.masked.resize(k);
  std::iota(st.masked.begin(), st.masked.end(), std::size_t{0});

  for (int s = 1; s <= cfg.steps && !st.masked.empty(); ++s) {
    struct Scored {
      std::size_t offset;
      double confidence;
      TokenId best;
    };
    std::vector<Scored> scored;
    scored.reserve(st.masked.size());
    for (std::size_t off : st.masked) {
      const auto q = d.conditional(st.block, st.prefix_len + off);
      const TokenId best = argmax(q);
      scored.push_back({off, q.prob(best), best});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      return a.confidence != b.confidence ? a.confidence > b.confidence : a.offset < b.offset;
    });
    const std::size_t take =
        s == cfg.steps ? scored.size() : std::min(scored.size(), static_cast<std::size_t>(cfg.top_k));
    std::vector<std::size_t> update;
    for (std::size_t u = 0; u < take; ++u) {
      st.block[st.prefix_len + scored[u].offset] = scored[u].best;
      update.push_back(scored[u].offset);
    }
    std::vector<std::size_t> remaining;
    for (std::size_t u = take; u < scored.size(); ++u) remaining.push_back(scored[u].offset);
    std::sort(remaining.begin(), remaining.end());
    st.masked = std::move(remaining);
    st.updates.push_back(std::move(update));
    st.step = s;
  }

  out.lattice.start = prefix.size();
  Sequence ctx = st.block;
  for (std::size_t off = 0; off < k; ++off) {
    const std::size_t pos = st.prefix_len + off;
    const TokenId keep = ctx[pos];
    ctx[pos] = Vocabulary::kMask;
    auto q = d.conditional(ctx, pos);
    ctx[pos] = keep;
    out.lattice.columns.push_back(top_candidates(q, cfg.m_max));
    st.final_conditionals.push_back(std::move(q));
  }
  return out;
}

/// Left-to-right proxy used on the verifier side: the conditional at in-block
/// position i (1-based) with every in-block position masked, so only the
/// committed prefix conditions it. With use_past_block the first i-1 drafted
/// tokens are revealed instead.
inline Categorical l2r_proxy(const BidirectionalDenoiser& d, const Sequence& prefix, const Sequence& block_so_far,
                             std::size_t k, std::size_t i, bool use_past_block = false) {
  if (i < 1 || i > k) throw Error("proxy position out of range");
  Sequence ctx = prefix;
  ctx.resize(prefix.size() + k, Vocabulary::kMask);
  if (use_past_block) {
    if (block_so_far.size() < i - 1) throw Error("block_so_far shorter than i-1");
    for (std::size_t r = 0; r + 1 < i; ++r) ctx[prefix.size() + r] = block_so_far[r];
  }
  return d.conditional(ctx, prefix.size() + i - 1);
}

}  // namespace dlmspec
