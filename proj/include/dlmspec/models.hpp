#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dlmspec/core.hpp"

namespace dlmspec {

namespace detail {

struct ContextHash {
  using is_transparent = void;
  std::size_t operator()(std::span<const TokenId> ctx) const {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (TokenId id : ctx) h = Rng::mix(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(id)));
    return static_cast<std::size_t>(h);
  }
  std::size_t operator()(const Sequence& ctx) const { return (*this)(std::span<const TokenId>(ctx)); }
};

struct ContextEq {
  using is_transparent = void;
  static bool eq(std::span<const TokenId> a, std::span<const TokenId> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
  }
  bool operator()(const Sequence& a, const Sequence& b) const { return a == b; }
  bool operator()(const Sequence& a, std::span<const TokenId> b) const { return eq(a, b); }
  bool operator()(std::span<const TokenId> a, const Sequence& b) const { return eq(a, b); }
};

}  // namespace detail

/// Next-token counts observed after one context.
struct ContextCounts {
  std::uint64_t total = 0;
  /// (next token, count), sorted by token id.
  std::vector<std::pair<TokenId, std::uint64_t>> next;

  std::uint64_t count(TokenId id) const {
    auto it = std::lower_bound(next.begin(), next.end(), id,
                               [](const auto& e, TokenId v) { return e.first < v; });
    return it != next.end() && it->first == id ? it->second : 0;
  }
};

/// Add-k smoothed n-gram model over the producible tokens of a vocabulary.
///
///   cond(c)[v] = (count(c, v) + k) / (count(c) + k * |V|)
///
/// where c is the last order-1 ids of the begin-of-sequence padded history and
/// |V| counts producible tokens only. Reserved ids get probability zero.
class NGramModel {
 public:
  using Table = std::unordered_map<Sequence, ContextCounts, detail::ContextHash, detail::ContextEq>;

  NGramModel() = default;
  NGramModel(int order, double k_add, std::size_t vocab_size, Table table)
      : order_(order), k_add_(k_add), vocab_size_(vocab_size), table_(std::move(table)) {
    check_params(order_, k_add_);
    if (vocab_size_ <= static_cast<std::size_t>(Vocabulary::kEos)) throw Error("vocabulary too small");
  }

  /// Counting options. `distance` d > 1 counts the token d positions after the
  /// context (a skip-gram table); `eos_padding` extends every document with that
  /// many extra end-of-sequence tokens; `terminate` appends the first one.
  struct TrainOptions {
    std::size_t distance = 1;
    std::size_t eos_padding = 0;
    bool terminate = true;
  };

  /// Counts every document with order-1 begin-of-sequence pads and a trailing end-of-sequence.
  static NGramModel train(std::span<const Sequence> corpus, int order, double k_add, std::size_t vocab_size) {
    return train(corpus, order, k_add, vocab_size, TrainOptions{});
  }

  static NGramModel train(std::span<const Sequence> corpus, int order, double k_add, std::size_t vocab_size,
                          const TrainOptions& opt) {
    check_params(order, k_add);
    if (corpus.empty()) throw Error("empty corpus");
    if (opt.distance < 1) throw Error("distance must be >= 1");
    std::unordered_map<Sequence, std::unordered_map<TokenId, std::uint64_t>, detail::ContextHash, detail::ContextEq>
        raw;
    const auto ctx_len = static_cast<std::size_t>(order - 1);
    const std::size_t d = opt.distance;
    Sequence padded;
    for (const auto& doc : corpus) {
      padded.assign(ctx_len, Vocabulary::kBos);
      padded.insert(padded.end(), doc.begin(), doc.end());
      if (opt.terminate) padded.insert(padded.end(), 1 + opt.eos_padding, Vocabulary::kEos);
      // target index q, context occupies [q - d - ctx_len + 1, q - d]
      for (std::size_t q = std::max(ctx_len, ctx_len + d - 1); q < padded.size(); ++q) {
        const TokenId next = padded[q];
        if (next < 0 || static_cast<std::size_t>(next) >= vocab_size) throw Error("corpus token out of vocabulary");
        if (!Vocabulary::producible(next)) continue;
        const std::size_t ctx_end = q + 1 - d;
        Sequence ctx(padded.begin() + static_cast<std::ptrdiff_t>(ctx_end - ctx_len),
                     padded.begin() + static_cast<std::ptrdiff_t>(ctx_end));
        ++raw[std::move(ctx)][next];
      }
    }
    Table table;
    table.reserve(raw.size());
    for (auto& [ctx, m] : raw) {
      ContextCounts cc;
      cc.next.assign(m.begin(), m.end());
      std::sort(cc.next.begin(), cc.next.end());
      for (const auto& e : cc.next) cc.total += e.second;
      table.emplace(ctx, std::move(cc));
    }
    return NGramModel(order, k_add, vocab_size, std::move(table));
  }

  int order() const { return order_; }
  double k_add() const { return k_add_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t producible_size() const { return vocab_size_ - static_cast<std::size_t>(Vocabulary::kEos); }
  const Table& table() const { return table_; }

  /// The order-1 ids that condition the next token after `history`.
  Sequence context_of(std::span<const TokenId> history) const {
    const auto ctx_len = static_cast<std::size_t>(order_ - 1);
    Sequence ctx(ctx_len, Vocabulary::kBos);
    const std::size_t take = std::min(ctx_len, history.size());
    std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
              ctx.end() - static_cast<std::ptrdiff_t>(take));
    return ctx;
  }

  /// Conditional for an explicit context of exactly order-1 ids.
  Categorical cond(std::span<const TokenId> ctx) const {
    const double denom_k = k_add_ * static_cast<double>(producible_size());
    const ContextCounts* cc = lookup(ctx);
    const double total = cc ? static_cast<double>(cc->total) : 0.0;
    const double log_den = std::log(total + denom_k);
    std::vector<double> lp(vocab_size_, kNegInf);
    const double floor_lp = std::log(k_add_) - log_den;
    for (std::size_t v = Vocabulary::kEos; v < vocab_size_; ++v) lp[v] = floor_lp;
    if (cc)
      for (const auto& [id, c] : cc->next) lp[static_cast<std::size_t>(id)] = std::log(static_cast<double>(c) + k_add_) - log_den;
    return Categorical(std::move(lp));
  }

  /// p(. | history): the history is reduced to its last order-1 ids.
  Categorical conditional(std::span<const TokenId> history) const {
    const auto ctx_len = static_cast<std::size_t>(order_ - 1);
    if (history.size() >= ctx_len) return cond(history.subspan(history.size() - ctx_len));
    return cond(context_of(history));
  }

  /// log p(token | history) without materializing the full distribution.
  double log_prob(std::span<const TokenId> history, TokenId token) const {
    if (!Vocabulary::producible(token) || static_cast<std::size_t>(token) >= vocab_size_) return kNegInf;
    const auto ctx_len = static_cast<std::size_t>(order_ - 1);
    const ContextCounts* cc = nullptr;
    if (history.size() >= ctx_len) {
      cc = lookup(history.subspan(history.size() - ctx_len));
    } else {
      cc = lookup(context_of(history));
    }
    const double total = cc ? static_cast<double>(cc->total) : 0.0;
    const double c = cc ? static_cast<double>(cc->count(token)) : 0.0;
    return std::log(c + k_add_) - std::log(total + k_add_ * static_cast<double>(producible_size()));
  }

 private:
  static void check_params(int order, double k_add) {
    if (order < 1) throw Error("n-gram order must be >= 1");
    if (!(k_add > 0.0)) throw Error("smoothing constant must be > 0");
  }

  const ContextCounts* lookup(std::span<const TokenId> ctx) const {
    auto it = table_.find(ctx);
    return it == table_.end() ? nullptr : &it->second;
  }

  int order_ = 1;
  double k_add_ = 0.1;
  std::size_t vocab_size_ = 0;
  Table table_;
};

/// ar_conditional: the target's next-token distribution after a prefix.
inline Categorical ar_conditional(const NGramModel& model, std::span<const TokenId> prefix) {
  return model.conditional(prefix);
}

/// Count-based stand-in for a bidirectional masked denoiser.
///
/// A masked position is scored as a log-linear mix of a forward term on the
/// nearest unmasked ids to its left and a backward term on the nearest
/// unmasked ids to its right; masked neighbors are skipped when gathering
/// either window. Each side keeps one table per gap distance d (1..D, larger
/// gaps use table D): the forward table d predicts the token d positions after
/// its context, the backward table d the token d positions before it
/// (trained on reversed documents). A right window with fewer than order-1
/// unmasked ids is an unseen context and contributes the uniform term.
///
/// With `pad_eos`, training extends documents with D end-of-sequence tokens, so
/// far positions learn "content exhausted"; the default only counts the single
/// terminating EOS.
class BidirectionalDenoiser {
 public:
  static constexpr std::size_t kDefaultMaxDistance = 8;

  BidirectionalDenoiser() = default;
  BidirectionalDenoiser(std::vector<NGramModel> forward, std::vector<NGramModel> backward, double w_bi)
      : forward_(std::move(forward)), backward_(std::move(backward)), w_bi_(w_bi) {
    if (!(w_bi_ >= 0.0 && w_bi_ <= 1.0)) throw Error("w_bi must lie in [0, 1]");
    if (forward_.empty() || forward_.size() != backward_.size()) throw Error("denoiser needs matching distance tables");
    for (const auto& m : forward_)
      if (m.vocab_size() != forward_.front().vocab_size() || m.order() != forward_.front().order())
        throw Error("forward tables disagree");
    for (const auto& m : backward_)
      if (m.vocab_size() != forward_.front().vocab_size() || m.order() != backward_.front().order())
        throw Error("backward tables disagree");
  }

  static BidirectionalDenoiser train(std::span<const Sequence> corpus, int order, double k_add, std::size_t vocab_size,
                                     double w_bi = 0.5, std::size_t max_distance = kDefaultMaxDistance,
                                     bool pad_eos = false) {
    if (max_distance < 1) throw Error("max distance must be >= 1");
    std::vector<Sequence> reversed;
    reversed.reserve(corpus.size());
    for (const auto& doc : corpus) {
      // Reading right to left: the end-of-sequence padding comes first.
      Sequence r(pad_eos ? max_distance + 1 : 1, Vocabulary::kEos);
      r.insert(r.end(), doc.rbegin(), doc.rend());
      reversed.push_back(std::move(r));
    }
    std::vector<NGramModel> fwd, bwd;
    for (std::size_t d = 1; d <= max_distance; ++d) {
      fwd.push_back(NGramModel::train(corpus, order, k_add, vocab_size, {d, pad_eos ? max_distance : 0, true}));
      bwd.push_back(NGramModel::train(reversed, order, k_add, vocab_size, {d, 0, false}));
    }
    return BidirectionalDenoiser(std::move(fwd), std::move(bwd), w_bi);
  }

  /// Forward table for gap d (clamped to the largest distance).
  const NGramModel& forward(std::size_t d = 1) const { return forward_[std::clamp<std::size_t>(d, 1, forward_.size()) - 1]; }
  const NGramModel& backward(std::size_t d = 1) const {
    return backward_[std::clamp<std::size_t>(d, 1, backward_.size()) - 1];
  }
  const std::vector<NGramModel>& forward_tables() const { return forward_; }
  const std::vector<NGramModel>& backward_tables() const { return backward_; }
  std::size_t max_distance() const { return forward_.size(); }
  double w_bi() const { return w_bi_; }
  std::size_t vocab_size() const { return forward_.front().vocab_size(); }

  struct Window {
    Sequence context;      // model context, nearest id last
    std::size_t gap = 0;   // distance from the position to the nearest context id
  };

  /// Nearest unmasked ids left of i in text order; BOS-padded at the sequence start.
  Window left_window(std::span<const TokenId> ctx, std::size_t i) const {
    const auto need = static_cast<std::size_t>(forward_.front().order() - 1);
    Window w;
    Sequence ids;
    std::size_t nearest = 0;
    bool found = false;
    for (std::size_t p = i; p-- > 0;) {
      if (ctx[p] == Vocabulary::kMask) continue;
      if (!found) nearest = p, found = true;
      if (ids.size() == need) break;
      ids.push_back(ctx[p]);
    }
    // With nothing unmasked on the left, the nearest "token" is the start pad just before index 0.
    w.gap = found ? i - nearest : i + 1;
    std::reverse(ids.begin(), ids.end());
    w.context = forward_.front().context_of(ids);
    return w;
  }

  /// Nearest unmasked ids right of i as a backward context; empty context if incomplete.
  std::optional<Window> right_window(std::span<const TokenId> ctx, std::size_t i) const {
    const auto need = static_cast<std::size_t>(backward_.front().order() - 1);
    Window w;
    bool found = false;
    for (std::size_t p = i + 1; p < ctx.size(); ++p) {
      if (ctx[p] == Vocabulary::kMask) continue;
      if (!found) w.gap = p - i, found = true;
      if (w.context.size() == need) break;
      w.context.push_back(ctx[p]);
    }
    if (!found || w.context.size() < need) return std::nullopt;
    std::reverse(w.context.begin(), w.context.end());
    return w;
  }

  /// q(. | ctx) at masked position i.
  Categorical conditional(std::span<const TokenId> ctx, std::size_t i) const {
    if (i >= ctx.size()) throw Error("position out of range");
    if (ctx[i] != Vocabulary::kMask) throw Error("position already filled");
    const auto left = left_window(ctx, i);
    auto fwd = forward(left.gap).cond(left.context);
    if (w_bi_ == 1.0) return fwd;
    const auto right = right_window(ctx, i);
    std::vector<double> w(vocab_size(), kNegInf);
    if (right) {
      const auto bwd = backward(right->gap).cond(right->context);
      for (std::size_t v = 0; v < w.size(); ++v) {
        const double f = fwd.log_probs()[v], b = bwd.log_probs()[v];
        if (f > kNegInf && b > kNegInf) w[v] = w_bi_ * f + (1.0 - w_bi_) * b;
      }
    } else {
      // A uniform backward term is a constant shift, removed by normalization.
      for (std::size_t v = 0; v < w.size(); ++v) {
        const double f = fwd.log_probs()[v];
        if (f > kNegInf) w[v] = w_bi_ * f;
      }
    }
    return Categorical::from_log_weights(std::move(w));
  }

 private:
  std::vector<NGramModel> forward_;
  std::vector<NGramModel> backward_;
  double w_bi_ = 0.5;
};

/// denoiser_conditional: q(. | ctx) at masked position i.
inline Categorical denoiser_conditional(const BidirectionalDenoiser& d, std::span<const TokenId> ctx, std::size_t i) {
  return d.conditional(ctx, i);
}

}  // namespace dlmspec
