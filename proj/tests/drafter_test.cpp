#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "dlmspec/drafter.hpp"

namespace dlmspec {
namespace {

constexpr std::size_t kV = 10;

std::vector<Sequence> random_corpus(std::uint64_t seed, int docs = 120, int len = 14) {
  Rng r(seed);
  std::vector<Sequence> out;
  for (int n = 0; n < docs; ++n) {
    Sequence s;
    TokenId prev = 4;
    for (int i = 0; i < len; ++i) {
      // sticky chain so conditionals are peaked but not deterministic
      prev = r.uniform() < 0.6 ? static_cast<TokenId>(4 + (prev - 4 + 1) % 6) : static_cast<TokenId>(4 + r.next_u64() % 6);
      s.push_back(prev);
    }
    out.push_back(s);
  }
  return out;
}

BidirectionalDenoiser make_denoiser(double w_bi = 0.5, int order = 2) {
  return BidirectionalDenoiser::train(random_corpus(3), order, 0.1, kV, w_bi);
}

TEST(Corrupt, EtaZeroIsIdentity) {
  Rng r(1);
  const Sequence x{4, 5, 6, 7, 3};
  EXPECT_EQ(corrupt(x, {0.0, std::nullopt}, r), x);
}

TEST(Corrupt, EtaOneMasksEverything) {
  Rng r(1);
  const Sequence x{4, 5, 6, 7, 3};
  const auto y = corrupt(x, {1.0, std::nullopt}, r);
  EXPECT_TRUE(std::all_of(y.begin(), y.end(), [](TokenId t) { return t == Vocabulary::kMask; }));
}

TEST(Corrupt, ChangeFrequencyMatchesKernel) {
  const std::vector<double> prior{0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4};
  CorruptionConfig cfg{0.3, Categorical::from_probs(prior)};
  Rng r(8);
  const std::size_t n = 100000;
  Sequence x(n);
  for (auto& t : x) t = static_cast<TokenId>(3 + r.next_u64() % 4);
  const auto y = corrupt(x, cfg, r);
  std::size_t changed = 0;
  double expected = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    changed += x[i] != y[i];
    expected += 0.3 * (1.0 - prior[static_cast<std::size_t>(x[i])]);
  }
  EXPECT_NEAR(static_cast<double>(changed) / n, expected / n, 0.01);
  EXPECT_THROW(corrupt(x, {1.5, std::nullopt}, r), Error);
}

TEST(TopCandidates, SortedDistinctTruncated) {
  const std::vector<double> p{0.0, 0.0, 0.0, 0.1, 0.3, 0.3, 0.2, 0.1};
  const auto col = top_candidates(Categorical::from_probs(p), 3);
  ASSERT_EQ(col.size(), 3u);
  EXPECT_EQ(col[0].token, 4);
  EXPECT_EQ(col[1].token, 5);
  EXPECT_EQ(col[2].token, 6);
  EXPECT_EQ(top_candidates(Categorical::from_probs(p), 99).size(), 5u);
}

void check_lattice(const RefineResult& rr, std::size_t k, std::size_t m_max) {
  ASSERT_EQ(rr.lattice.size(), k);
  for (const auto& col : rr.lattice.columns) {
    ASSERT_GE(col.size(), 1u);
    ASSERT_LE(col.size(), m_max);
    std::set<TokenId> ids;
    for (std::size_t m = 0; m < col.size(); ++m) {
      EXPECT_TRUE(std::isfinite(col[m].score));
      if (m) {
        EXPECT_LE(col[m].score, col[m - 1].score);
      }
      ids.insert(col[m].token);
    }
    EXPECT_EQ(ids.size(), col.size());
  }
}

TEST(Refine, SingleStepFillsEveryPosition) {
  const auto d = make_denoiser();
  const Sequence prefix{4, 5};
  const auto rr = refine(d, prefix, 6, {1, 1, 15});
  EXPECT_EQ(rr.state.step, 1);
  ASSERT_EQ(rr.state.updates.size(), 1u);
  EXPECT_EQ(rr.state.updates[0].size(), 6u);
  EXPECT_TRUE(rr.state.masked.empty());
  // one pass: each draft token is the argmax against the all-masked block
  Sequence all_masked = prefix;
  all_masked.resize(8, Vocabulary::kMask);
  const auto draft = rr.state.draft();
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(draft[i], argmax(d.conditional(all_masked, 2 + i)));
  check_lattice(rr, 6, 15);
}

TEST(Refine, OnePerRoundInConfidenceOrder) {
  const auto d = make_denoiser();
  const Sequence prefix{6, 7, 8};
  const std::size_t k = 7;
  const auto rr = refine(d, prefix, k, {static_cast<int>(k), 1, 15});
  ASSERT_EQ(rr.state.step, static_cast<int>(k));
  // replay: every round must pick the most confident masked position
  Sequence block = prefix;
  block.resize(prefix.size() + k, Vocabulary::kMask);
  std::set<std::size_t> masked;
  for (std::size_t i = 0; i < k; ++i) masked.insert(i);
  for (const auto& u : rr.state.updates) {
    ASSERT_EQ(u.size(), 1u);
    double best = -1.0;
    std::size_t best_off = 0;
    for (std::size_t off : masked) {
      const auto q = d.conditional(block, prefix.size() + off);
      const double c = q.prob(argmax(q));
      if (c > best) best = c, best_off = off;
    }
    EXPECT_EQ(u[0], best_off);
    const auto q = d.conditional(block, prefix.size() + u[0]);
    block[prefix.size() + u[0]] = argmax(q);
    masked.erase(u[0]);
  }
  EXPECT_TRUE(masked.empty());
  EXPECT_EQ(rr.state.block, block);
}

TEST(Refine, RoundsStopWhenBlockIsFull) {
  const auto d = make_denoiser();
  const auto rr = refine(d, Sequence{4}, 7, {10, 2, 15});
  EXPECT_EQ(rr.state.step, 4);  // 2 + 2 + 2 + 1
  std::size_t remaining = 7;
  for (const auto& u : rr.state.updates) {
    EXPECT_EQ(u.size(), std::min<std::size_t>(2, remaining));
    remaining -= u.size();
  }
  EXPECT_EQ(remaining, 0u);
}

TEST(Refine, LatticeColumnsRemaskOnlyTheirPosition) {
  const auto d = make_denoiser();
  const Sequence prefix{5, 9};
  const auto rr = refine(d, prefix, 5, {3, 2, 4});
  check_lattice(rr, 5, 4);
  for (std::size_t i = 0; i < 5; ++i) {
    Sequence ctx = rr.state.block;
    ctx[prefix.size() + i] = Vocabulary::kMask;
    const auto ref = top_candidates(d.conditional(ctx, prefix.size() + i), 4);
    ASSERT_EQ(ref.size(), rr.lattice.columns[i].size());
    for (std::size_t m = 0; m < ref.size(); ++m) {
      EXPECT_EQ(ref[m].token, rr.lattice.columns[i][m].token);
      EXPECT_EQ(ref[m].score, rr.lattice.columns[i][m].score);
    }
  }
}

TEST(Refine, Deterministic) {
  const auto d = make_denoiser();
  const auto a = refine(d, Sequence{4, 4}, 9, {2, 3, 6});
  const auto b = refine(d, Sequence{4, 4}, 9, {2, 3, 6});
  EXPECT_EQ(a.state.block, b.state.block);
  for (std::size_t i = 0; i < 9; ++i) {
    ASSERT_EQ(a.lattice.columns[i].size(), b.lattice.columns[i].size());
    for (std::size_t m = 0; m < a.lattice.columns[i].size(); ++m)
      EXPECT_EQ(a.lattice.columns[i][m].score, b.lattice.columns[i][m].score);
  }
}

TEST(Refine, BadArguments) {
  const auto d = make_denoiser();
  EXPECT_THROW(refine(d, Sequence{4}, 0, {}), Error);
  EXPECT_THROW(refine(d, Sequence{4}, 3, {0, 1, 15}), Error);
  EXPECT_THROW(refine(d, Sequence{4}, 3, {1, 0, 15}), Error);
}

TEST(L2rProxy, FirstPositionSeesOnlyPrefix) {
  const auto d = make_denoiser();
  const Sequence prefix{4, 6, 5};
  const auto a = l2r_proxy(d, prefix, Sequence{7, 8, 9}, 3, 1, true);
  const auto b = l2r_proxy(d, prefix, Sequence{4, 4, 4}, 3, 1, false);
  Sequence ctx = prefix;
  ctx.resize(6, Vocabulary::kMask);
  EXPECT_EQ(a.log_probs(), d.conditional(ctx, 3).log_probs());
  EXPECT_EQ(b.log_probs(), a.log_probs());
}

TEST(L2rProxy, InvariantToFutureBlockTokens) {
  const auto d = make_denoiser(0.5, 3);
  Rng r(21);
  const std::size_t k = 6;
  for (int t = 0; t < 200; ++t) {
    Sequence prefix{static_cast<TokenId>(4 + r.next_u64() % 6), static_cast<TokenId>(4 + r.next_u64() % 6)};
    Sequence block(k), other(k);
    for (auto& x : block) x = static_cast<TokenId>(4 + r.next_u64() % 6);
    const std::size_t i = 1 + r.next_u64() % k;
    other = block;
    for (std::size_t off = i - 1; off < k; ++off) other[off] = static_cast<TokenId>(4 + r.next_u64() % 6);
    for (bool past : {false, true})
      EXPECT_EQ(l2r_proxy(d, prefix, block, k, i, past).log_probs(), l2r_proxy(d, prefix, other, k, i, past).log_probs());
    // the default ignores the drafted past as well
    Sequence scrambled(k);
    for (auto& x : scrambled) x = static_cast<TokenId>(4 + r.next_u64() % 6);
    EXPECT_EQ(l2r_proxy(d, prefix, block, k, i).log_probs(), l2r_proxy(d, prefix, scrambled, k, i).log_probs());
  }
}

TEST(L2rProxy, ForwardOnlyDenoiserWithPastEqualsNgram) {
  const auto corpus = random_corpus(3);
  const auto d = BidirectionalDenoiser::train(corpus, 3, 0.1, kV, 1.0);
  const auto ar = NGramModel::train(corpus, 3, 0.1, kV);
  const Sequence prefix{4, 5, 6};
  const Sequence block{7, 8, 9, 4, 5};
  for (std::size_t i = 1; i <= block.size(); ++i) {
    Sequence hist = prefix;
    hist.insert(hist.end(), block.begin(), block.begin() + static_cast<std::ptrdiff_t>(i - 1));
    EXPECT_EQ(l2r_proxy(d, prefix, block, block.size(), i, true).log_probs(), ar_conditional(ar, hist).log_probs());
  }
}

TEST(L2rProxy, RangeChecked) {
  const auto d = make_denoiser();
  EXPECT_THROW(l2r_proxy(d, Sequence{4}, Sequence{}, 3, 0), Error);
  EXPECT_THROW(l2r_proxy(d, Sequence{4}, Sequence{}, 3, 4), Error);
  EXPECT_THROW(l2r_proxy(d, Sequence{4}, Sequence{}, 3, 3, true), Error);
}

}  // namespace
}  // namespace dlmspec
