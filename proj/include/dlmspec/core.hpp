#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dlmspec {

/// Error raised by every module on contract violations and bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenId = std::int32_t;
using Sequence = std::vector<TokenId>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Probabilities below this are treated as exact zeros.
inline constexpr double kProbFloor = 1e-300;
inline constexpr double kNormTolerance = 1e-9;

inline double safe_log(double p) { return p < kProbFloor ? kNegInf : std::log(p); }

/// Dense token <-> id mapping. The first four ids are reserved:
/// mask, begin-of-sequence and unknown are never produced by any model,
/// end-of-sequence is an ordinary producible token.
class Vocabulary {
 public:
  static constexpr TokenId kMask = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kFirstWord = 4;

  Vocabulary() : tokens_{"<mask>", "<s>", "<unk>", "</s>"} {
    for (TokenId i = 0; i < static_cast<TokenId>(tokens_.size()); ++i) index_.emplace(tokens_[i], i);
  }

  explicit Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
    for (const auto& w : words) add(w);
  }

  /// Adds a word if absent; returns its id.
  TokenId add(const std::string& word) {
    auto it = index_.find(word);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(word);
    index_.emplace(word, id);
    return id;
  }

  TokenId id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& word) const { return index_.count(word) != 0; }

  const std::string& token(TokenId id) const {
    if (!valid(id)) throw Error("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  /// Number of tokens a model can emit (words plus end-of-sequence).
  std::size_t producible_size() const { return tokens_.size() - kEos; }
  bool valid(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }
  static constexpr bool producible(TokenId id) { return id >= kEos; }

  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId eos_id() const { return kEos; }
  TokenId mask_id() const { return kMask; }
  TokenId bos_id() const { return kBos; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Natural-log probability vector over the full vocabulary.
class Categorical {
 public:
  Categorical() = default;

  /// Takes ownership of already-normalized log probabilities and checks them.
  explicit Categorical(std::vector<double> log_probs) : log_probs_(std::move(log_probs)) { validate(); }

  /// Normalizes arbitrary log weights (-inf allowed) with log-sum-exp.
  static Categorical from_log_weights(std::vector<double> w) {
    double mx = kNegInf;
    for (double x : w) mx = std::max(mx, x);
    if (!(mx > kNegInf) || !std::isfinite(mx)) throw Error("categorical has no finite mass");
    double z = 0.0;
    for (double x : w) z += x > kNegInf ? std::exp(x - mx) : 0.0;
    const double lz = mx + std::log(z);
    for (double& x : w) x = x > kNegInf ? x - lz : kNegInf;
    return Categorical(std::move(w));
  }

  /// From plain probabilities (need not be normalized).
  static Categorical from_probs(std::span<const double> p) {
    std::vector<double> w(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] < 0.0) throw Error("negative probability");
      w[i] = safe_log(p[i]);
    }
    return from_log_weights(std::move(w));
  }

  static Categorical one_hot(std::size_t size, TokenId id) {
    std::vector<double> w(size, kNegInf);
    w.at(static_cast<std::size_t>(id)) = 0.0;
    return Categorical(std::move(w));
  }

  std::size_t size() const { return log_probs_.size(); }
  double log_prob(TokenId id) const { return log_probs_.at(static_cast<std::size_t>(id)); }
  double prob(TokenId id) const {
    const double lp = log_prob(id);
    return lp > kNegInf ? std::exp(lp) : 0.0;
  }
  const std::vector<double>& log_probs() const { return log_probs_; }

  std::vector<double> probs() const {
    std::vector<double> p(log_probs_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = log_probs_[i] > kNegInf ? std::exp(log_probs_[i]) : 0.0;
    return p;
  }

 private:
  void validate() const {
    double total = 0.0;
    bool any = false;
    for (double x : log_probs_) {
      if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) throw Error("categorical entry not finite");
      if (x > kNegInf) {
        any = true;
        total += std::exp(x);
      }
    }
    if (!any) throw Error("categorical has no finite mass");
    if (std::abs(total - 1.0) > kNormTolerance) throw Error("categorical does not sum to one");
  }

  std::vector<double> log_probs_;
};

/// Counter-based generator: draw n of stream s is a pure function of (key, n).
/// Substreams derive new keys from a label so pipeline stages never share draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t hash_label(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  Rng substream(std::string_view label) const { return from_key(mix(key_ ^ hash_label(label))); }
  Rng substream(std::uint64_t index) const { return from_key(mix(key_ ^ mix(index + 0x632be59bd9b4e019ULL))); }

  std::uint64_t next_u64() { return mix(key_ + mix(counter_++)); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const { return counter_; }

 private:
  static Rng from_key(std::uint64_t key) {
    Rng r;
    r.key_ = key;
    return r;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Inverse-CDF draw from a probability vector (unnormalized allowed).
inline TokenId sample_probs(std::span<const double> p, Rng& rng) {
  double total = 0.0;
  for (double x : p) total += x;
  if (!(total > 0.0)) throw Error("cannot sample from zero mass");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  TokenId last = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = static_cast<TokenId>(i);
    if (u < acc) return last;
  }
  return last;
}

inline TokenId sample(const Categorical& dist, Rng& rng) {
  const auto p = dist.probs();
  return sample_probs(p, rng);
}

/// Maximal entry; lowest id wins ties.
inline TokenId argmax(const Categorical& dist) {
  const auto& lp = dist.log_probs();
  std::size_t best = 0;
  for (std::size_t i = 1; i < lp.size(); ++i)
    if (lp[i] > lp[best]) best = i;
  return static_cast<TokenId>(best);
}

/// Every id valid and no mask in a committed sequence.
inline void check_committed(const Sequence& s, const Vocabulary& vocab) {
  for (TokenId id : s) {
    if (!vocab.valid(id)) throw Error("invalid token id " + std::to_string(id));
    if (id == Vocabulary::kMask) throw Error("mask token in committed sequence");
  }
}

}  // namespace dlmspec
