#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "dlmspec/core.hpp"

namespace dlmspec {

struct AdlConfig {
  int k_min = 20;
  int k_max = 30;
  int delta = 10;
  double rho = 0.5;

  void validate() const {
    if (k_min < 1 || k_min > k_max) throw Error("need 1 <= k_min <= k_max");
    if (delta < 0) throw Error("delta must be >= 0");
    if (!(rho > 0.0 && rho <= 1.0)) throw Error("rho must lie in (0, 1]");
  }
};

struct AdlState {
  double ema_gen = 0.0;
  double ema_acc = 0.0;
  int k_next = 0;

  static AdlState initial(const AdlConfig& cfg) { return {0.0, 0.0, cfg.k_max}; }
};

/// EOS-aware generation length of a raw draft: tokens before the first EOS, at most k.
inline int gen_signal(std::span<const TokenId> draft, int k, TokenId eos_id = Vocabulary::kEos) {
  for (std::size_t i = 0; i < draft.size() && static_cast<int>(i) < k; ++i)
    if (draft[i] == eos_id) return static_cast<int>(i);
  return k;
}

/// One controller step. The growth indicator compares the post-update averages.
inline AdlState update(const AdlState& s, int l_gen, int l_acc, const AdlConfig& cfg) {
  AdlState out;
  out.ema_gen = (1.0 - cfg.rho) * s.ema_gen + cfg.rho * l_gen;
  out.ema_acc = (1.0 - cfg.rho) * s.ema_acc + cfg.rho * l_acc;
  const double grow = out.ema_acc >= out.ema_gen ? cfg.delta : 0;
  const double raw = std::ceil(out.ema_gen + grow);
  out.k_next = static_cast<int>(std::clamp(raw, static_cast<double>(cfg.k_min), static_cast<double>(cfg.k_max)));
  return out;
}

}  // namespace dlmspec
