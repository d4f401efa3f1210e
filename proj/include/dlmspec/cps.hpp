#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dlmspec/core.hpp"
#include "dlmspec/drafter.hpp"
#include "dlmspec/models.hpp"

namespace dlmspec {

enum class MassMode {
  kFullVocabulary,  // cumulative mass of the drafter's normalized probabilities
  kRenormalized,    // mass renormalized over the column's own entries
};

enum class EosStop {
  kArgmax,  // depth capped at the first column whose top candidate is EOS
  kAny,     // depth capped at the first column containing EOS at all
  kOff,
};

/// How complete paths of different lengths (EOS-finished vs full depth) are compared.
enum class Selection {
  kPrefixMass,  // sum over i of exp(S(pi_1..i)): expected accepted length if exp(step score) were the accept rate
  kScore,       // raw S(pi); favours the shortest EOS-finished path
};

struct PruneConfig {
  double tau = 0.8;
  std::size_t m_max = 15;
  bool keep_eos = true;
  MassMode mass_mode = MassMode::kFullVocabulary;
};

struct CpsConfig {
  std::size_t beam = 3;
  double lambda = 0.5;
  PruneConfig prune;
  EosStop eos_stop = EosStop::kArgmax;
  Selection selection = Selection::kPrefixMass;
};

/// Keeps the shortest best-first prefix whose mass reaches tau, at most m_max
/// entries. EOS that ranked within the first m_max but was cut is re-appended.
inline LatticeColumn prune_column(const LatticeColumn& column, const PruneConfig& cfg) {
  if (column.empty()) throw Error("cannot prune an empty column");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw Error("tau must lie in (0, 1]");
  if (cfg.m_max < 1) throw Error("m_max must be >= 1");
  const std::size_t cap = std::min(cfg.m_max, column.size());

  double norm = 1.0;
  if (cfg.mass_mode == MassMode::kRenormalized) {
    norm = 0.0;
    for (std::size_t m = 0; m < cap; ++m) norm += std::exp(column[m].score);
  }
  std::size_t keep = cap;
  if (cfg.tau < 1.0) {
    double mass = 0.0;
    for (std::size_t m = 0; m < cap; ++m) {
      mass += std::exp(column[m].score) / norm;
      if (mass >= cfg.tau) {
        keep = m + 1;
        break;
      }
    }
  }
  LatticeColumn out(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(keep));
  if (cfg.keep_eos) {
    for (std::size_t m = keep; m < cap; ++m)
      if (column[m].token == Vocabulary::kEos) {
        out.push_back(column[m]);
        break;
      }
  }
  return out;
}

inline TokenLattice prune_lattice(const TokenLattice& lattice, const PruneConfig& cfg) {
  TokenLattice out;
  out.start = lattice.start;
  out.columns.reserve(lattice.columns.size());
  for (const auto& c : lattice.columns) out.columns.push_back(prune_column(c, cfg));
  return out;
}

struct Path {
  Sequence tokens;
  double score = 0.0;
  double prefix_mass = 0.0;   // sum over i of exp(S(pi_1..i))
  std::vector<double> dlm;    // per-step drafter log-score
  std::vector<double> ngram;  // per-step causal proxy log-prob

  bool ends_with_eos() const { return !tokens.empty() && tokens.back() == Vocabulary::kEos; }
};

/// Number of columns a path may span under the EOS early-stop rule.
inline std::size_t search_depth(const TokenLattice& lattice, EosStop rule) {
  if (rule == EosStop::kOff) return lattice.size();
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    const auto& col = lattice.columns[i];
    if (col.empty()) continue;
    if (rule == EosStop::kArgmax && col.front().token == Vocabulary::kEos) return i + 1;
    if (rule == EosStop::kAny)
      for (const auto& e : col)
        if (e.token == Vocabulary::kEos) return i + 1;
  }
  return lattice.size();
}

/// S(pi) = sum_i lambda * dlm_i(pi_i) + (1 - lambda) * ngram(pi_i | prefix, pi_<i).
inline double path_score(const Sequence& prefix, const Sequence& path, const TokenLattice& lattice,
                         const NGramModel& proxy, double lambda, Path* detail = nullptr) {
  if (path.size() > lattice.size()) throw Error("path longer than lattice");
  Sequence hist = prefix;
  double total = 0.0;
  if (detail) *detail = Path{};
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& col = lattice.columns[i];
    auto it = std::find_if(col.begin(), col.end(), [&](const LatticeEntry& e) { return e.token == path[i]; });
    if (it == col.end()) throw Error("off-lattice token");
    const double ng = proxy.log_prob(hist, path[i]);
    total += lambda * it->score + (1.0 - lambda) * ng;
    if (detail) {
      detail->prefix_mass += std::exp(total);
      detail->dlm.push_back(it->score);
      detail->ngram.push_back(ng);
    }
    hist.push_back(path[i]);
  }
  if (detail) {
    detail->tokens = path;
    detail->score = total;
  }
  return total;
}

namespace detail {

inline double objective(const Path& p, Selection sel) { return sel == Selection::kScore ? p.score : p.prefix_mass; }

/// Higher objective first, then lexicographically smaller token sequence.
inline bool better_by(const Path& a, const Path& b, Selection sel) {
  const double oa = objective(a, sel), ob = objective(b, sel);
  if (oa != ob) return oa > ob;
  return a.tokens < b.tokens;
}

}  // namespace detail

/// Objective maximized by the search under `sel`.
inline double selection_score(const Path& p, Selection sel) { return detail::objective(p, sel); }

struct SearchStats {
  std::uint64_t expansions = 0;
  std::size_t depth = 0;
};

/// Left-to-right beam search over the (already pruned) lattice.
///
/// Keeps the top-B unfinished hypotheses per depth under the selection
/// objective. A hypothesis that places EOS is frozen into the finished set. The
/// result is the best of finished and full-depth hypotheses.
inline Path beam_search(const Sequence& prefix, const TokenLattice& lattice, const NGramModel& proxy,
                        const CpsConfig& cfg, SearchStats* stats = nullptr) {
  if (lattice.size() == 0) throw Error("empty lattice");
  if (cfg.beam < 1) throw Error("beam must be >= 1");
  const std::size_t depth = search_depth(lattice, cfg.eos_stop);

  struct Cand {
    std::size_t parent;
    const LatticeEntry* entry;
    double ng;
    double score;
    double mass;
    double key;
  };
  std::vector<Path> beams(1);
  std::optional<Path> best_finished;
  std::uint64_t expansions = 0;
  Sequence hist;
  std::vector<Cand> cands;
  for (std::size_t d = 0; d < depth; ++d) {
    cands.clear();
    for (std::size_t b = 0; b < beams.size(); ++b) {
      hist = prefix;
      hist.insert(hist.end(), beams[b].tokens.begin(), beams[b].tokens.end());
      for (const auto& e : lattice.columns[d]) {
        ++expansions;
        const double ng = proxy.log_prob(hist, e.token);
        const double score = beams[b].score + (cfg.lambda * e.score + (1.0 - cfg.lambda) * ng);
        const double mass = beams[b].prefix_mass + std::exp(score);
        if (e.token == Vocabulary::kEos) {
          Path p = beams[b];
          p.tokens.push_back(e.token);
          p.dlm.push_back(e.score);
          p.ngram.push_back(ng);
          p.score = score;
          p.prefix_mass = mass;
          if (!best_finished || detail::better_by(p, *best_finished, cfg.selection)) best_finished = std::move(p);
        } else {
          cands.push_back({b, &e, ng, score, mass, cfg.selection == Selection::kScore ? score : mass});
        }
      }
    }
    const std::size_t keep = std::min(cfg.beam, cands.size());
    auto before = [&](const Cand& x, const Cand& y) {
      if (x.key != y.key) return x.key > y.key;
      const auto& tx = beams[x.parent].tokens;
      const auto& ty = beams[y.parent].tokens;
      if (tx != ty) return tx < ty;
      return x.entry->token < y.entry->token;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), before);
    std::vector<Path> next;
    next.reserve(keep);
    for (std::size_t c = 0; c < keep; ++c) {
      Path p = beams[cands[c].parent];
      p.tokens.push_back(cands[c].entry->token);
      p.dlm.push_back(cands[c].entry->score);
      p.ngram.push_back(cands[c].ng);
      p.score = cands[c].score;
      p.prefix_mass = cands[c].mass;
      next.push_back(std::move(p));
    }
    beams = std::move(next);
    if (beams.empty()) break;
  }
  if (stats) {
    stats->expansions = expansions;
    stats->depth = depth;
  }
  const Path* best = best_finished ? &*best_finished : nullptr;
  for (const auto& p : beams)
    if (!p.tokens.empty() && (!best || detail::better_by(p, *best, cfg.selection))) best = &p;
  if (!best) throw Error("beam search produced no path");
  return *best;
}

/// Per-column top candidate under the same EOS truncation (search disabled).
inline Path argmax_path(const Sequence& prefix, const TokenLattice& lattice, const NGramModel& proxy, double lambda,
                        EosStop rule) {
  const std::size_t depth = search_depth(lattice, rule);
  Sequence toks;
  for (std::size_t d = 0; d < depth; ++d) {
    if (lattice.columns[d].empty()) throw Error("empty lattice column");
    toks.push_back(lattice.columns[d].front().token);
    if (toks.back() == Vocabulary::kEos) break;
  }
  Path p;
  path_score(prefix, toks, lattice, proxy, lambda, &p);
  return p;
}

/// Exhaustive maximizer of the selection objective; the oracle for beam_search.
inline Path brute_force_best(const Sequence& prefix, const TokenLattice& lattice, const NGramModel& proxy,
                             double lambda, EosStop rule = EosStop::kArgmax,
                             Selection sel = Selection::kPrefixMass,
                             std::uint64_t budget = 1'000'000) {
  if (lattice.size() == 0) throw Error("empty lattice");
  const std::size_t depth = search_depth(lattice, rule);
  double product = 1.0;
  for (std::size_t d = 0; d < depth; ++d) product *= static_cast<double>(lattice.columns[d].size());
  if (product > static_cast<double>(budget)) throw Error("enumeration budget exceeded");

  Path best;
  bool have = false;
  Path cur;
  // Depth-first enumeration; every prefix ending in EOS or reaching full depth is a complete path.
  auto rec = [&](auto&& self, std::size_t d, Sequence& toks) -> void {
    if (d == depth) {
      if (toks.empty()) return;
      path_score(prefix, toks, lattice, proxy, lambda, &cur);
      if (!have || detail::better_by(cur, best, sel)) best = cur, have = true;
      return;
    }
    for (const auto& e : lattice.columns[d]) {
      toks.push_back(e.token);
      if (e.token == Vocabulary::kEos) {
        path_score(prefix, toks, lattice, proxy, lambda, &cur);
        if (!have || detail::better_by(cur, best, sel)) best = cur, have = true;
      } else {
        self(self, d + 1, toks);
      }
      toks.pop_back();
    }
  };
  Sequence toks;
  rec(rec, 0, toks);
  if (!have) throw Error("lattice has no complete path");
  return best;
}

}  // namespace dlmspec
