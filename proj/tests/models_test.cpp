#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "dlmspec/models.hpp"

namespace dlmspec {
namespace {

constexpr TokenId A = 4, B = 5, C = 6, D = 7;

double total_mass(const Categorical& c) {
  const auto p = c.probs();
  return std::accumulate(p.begin(), p.end(), 0.0);
}

// "a b a b" with ids a=4, b=5: producible {</s>, a, b}
NGramModel toy_bigram() {
  const std::vector<Sequence> corpus{{A, B, A, B}};
  return NGramModel::train(corpus, 2, 1.0, 6);
}

TEST(NGram, HandCountedBigram) {
  const auto m = toy_bigram();
  // a is followed by b twice: (2 + 1) / (2 + 3)
  EXPECT_NEAR(m.cond(Sequence{A}).prob(B), 0.6, 1e-12);
  EXPECT_NEAR(m.cond(Sequence{A}).prob(A), 0.2, 1e-12);
  // b -> a once, b -> </s> once
  EXPECT_NEAR(m.cond(Sequence{B}).prob(Vocabulary::kEos), 0.4, 1e-12);
  EXPECT_NEAR(ar_conditional(m, Sequence{B, B, A}).prob(B), 0.6, 1e-12);
}

TEST(NGram, UnseenContextIsUniform) {
  const auto m = toy_bigram();
  const auto c = m.cond(Sequence{Vocabulary::kEos});
  for (TokenId v : {Vocabulary::kEos, A, B}) EXPECT_NEAR(c.prob(v), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(c.prob(Vocabulary::kMask), 0.0);
  EXPECT_EQ(c.prob(Vocabulary::kBos), 0.0);
}

TEST(NGram, UnigramIgnoresContext) {
  const std::vector<Sequence> corpus{{A, B, C}, {A, A}};
  const auto m = NGramModel::train(corpus, 1, 0.1, 8);
  const auto p0 = m.conditional(Sequence{});
  const auto p1 = m.conditional(Sequence{A, B, C, D});
  EXPECT_EQ(p0.log_probs(), p1.log_probs());
}

TEST(NGram, EmptyCorpusAndBadParams) {
  const std::vector<Sequence> none;
  EXPECT_THROW(NGramModel::train(none, 2, 1.0, 6), Error);
  const std::vector<Sequence> one{{A}};
  EXPECT_THROW(NGramModel::train(one, 0, 1.0, 6), Error);
  EXPECT_THROW(NGramModel::train(one, 2, 0.0, 6), Error);
}

TEST(NGram, BosPaddingForShortHistory) {
  const std::vector<Sequence> corpus{{A, B}, {A, C}};
  const auto m = NGramModel::train(corpus, 3, 0.1, 8);
  // history shorter than order-1 is BOS padded
  EXPECT_EQ(m.conditional(Sequence{}).log_probs(), m.cond(Sequence{Vocabulary::kBos, Vocabulary::kBos}).log_probs());
  EXPECT_GT(m.conditional(Sequence{}).prob(A), 0.5);
}

TEST(NGram, LogProbMatchesConditional) {
  Rng r(17);
  std::vector<Sequence> corpus;
  for (int d = 0; d < 50; ++d) {
    Sequence s;
    for (int i = 0; i < 12; ++i) s.push_back(static_cast<TokenId>(4 + r.next_u64() % 6));
    corpus.push_back(s);
  }
  const auto m = NGramModel::train(corpus, 3, 0.05, 10);
  for (int t = 0; t < 200; ++t) {
    Sequence h;
    const auto len = r.next_u64() % 5;
    for (std::size_t i = 0; i < len; ++i) h.push_back(static_cast<TokenId>(3 + r.next_u64() % 7));
    const auto c = m.conditional(h);
    EXPECT_NEAR(total_mass(c), 1.0, 1e-9);
    for (TokenId v = 0; v < 10; ++v) {
      const double a = m.log_prob(h, v), b = c.log_prob(v);
      if (b == kNegInf) {
        EXPECT_EQ(a, kNegInf);
      } else {
        EXPECT_NEAR(a, b, 1e-12);
      }
    }
  }
}

TEST(NGram, MarkovPropertyUnderRandomExtension) {
  Rng r(5);
  std::vector<Sequence> corpus;
  for (int d = 0; d < 80; ++d) {
    Sequence s;
    for (int i = 0; i < 10; ++i) s.push_back(static_cast<TokenId>(4 + r.next_u64() % 5));
    corpus.push_back(s);
  }
  const auto m = NGramModel::train(corpus, 3, 0.1, 9);
  for (int t = 0; t < 300; ++t) {
    Sequence tail{static_cast<TokenId>(4 + r.next_u64() % 5), static_cast<TokenId>(4 + r.next_u64() % 5)};
    Sequence longer;
    const auto extra = 1 + r.next_u64() % 6;
    for (std::size_t i = 0; i < extra; ++i) longer.push_back(static_cast<TokenId>(4 + r.next_u64() % 5));
    longer.insert(longer.end(), tail.begin(), tail.end());
    EXPECT_EQ(m.conditional(tail).log_probs(), m.conditional(longer).log_probs());
  }
}

TEST(NGram, DistanceTableCountsSkipGrams) {
  const std::vector<Sequence> corpus{{A, B, C}};
  const auto m = NGramModel::train(corpus, 2, 1.0, 8, {2, 0, true});
  // A is followed two positions later by C
  const auto c = m.cond(Sequence{A});
  EXPECT_GT(c.prob(C), c.prob(B));
  EXPECT_NEAR(c.prob(C), 2.0 / 6.0, 1e-12);
}

std::vector<Sequence> palindrome() { return {{A, B, C, D, C, B, A}}; }

TEST(Denoiser, SymmetricContextAgreesWithEitherSide) {
  const auto d = BidirectionalDenoiser::train(palindrome(), 2, 0.5, 8, 0.5);
  const Sequence ctx{A, B, C, Vocabulary::kMask, C, B, A};
  const auto q = denoiser_conditional(d, ctx, 3);
  const auto fwd = d.forward(1).cond(Sequence{C});
  const auto bwd = d.backward(1).cond(Sequence{C});
  for (TokenId v = 0; v < 8; ++v) {
    EXPECT_NEAR(fwd.prob(v), bwd.prob(v), 1e-12);
    EXPECT_NEAR(q.prob(v), fwd.prob(v), 1e-12);
  }
}

TEST(Denoiser, MaskedRightContextLeavesSqrtForward) {
  const auto d = BidirectionalDenoiser::train(palindrome(), 2, 0.5, 8, 0.5);
  const Sequence ctx{A, B, Vocabulary::kMask, Vocabulary::kMask, Vocabulary::kMask};
  const auto q = d.conditional(ctx, 2);
  const auto f = d.forward(1).cond(Sequence{B});
  std::vector<double> w(8, 0.0);
  double z = 0.0;
  for (TokenId v = 0; v < 8; ++v) z += w[static_cast<std::size_t>(v)] = std::sqrt(f.prob(v));
  for (TokenId v = 0; v < 8; ++v) EXPECT_NEAR(q.prob(v), w[static_cast<std::size_t>(v)] / z, 1e-12);
}

TEST(Denoiser, ForwardOnlyEqualsLeftWindowNgram) {
  const std::vector<Sequence> corpus{{A, B, C, A, B, D}, {B, C, A}};
  const auto d = BidirectionalDenoiser::train(corpus, 3, 0.1, 8, 1.0);
  const auto ar = NGramModel::train(corpus, 3, 0.1, 8);
  const Sequence ctx{A, B, Vocabulary::kMask, C, A};
  EXPECT_EQ(d.conditional(ctx, 2).log_probs(), ar.conditional(Sequence{A, B}).log_probs());
}

TEST(Denoiser, SkipsMaskedNeighbours) {
  const std::vector<Sequence> corpus{{A, B, C, D}, {D, C, B, A}};
  const auto d = BidirectionalDenoiser::train(corpus, 2, 0.1, 8, 0.5);
  const Sequence ctx{A, Vocabulary::kMask, Vocabulary::kMask, D};
  const auto left = d.left_window(ctx, 2);
  EXPECT_EQ(left.context, Sequence{A});
  EXPECT_EQ(left.gap, 2u);
  const auto right = d.right_window(ctx, 1);
  ASSERT_TRUE(right.has_value());
  EXPECT_EQ(right->context, Sequence{D});
  EXPECT_EQ(right->gap, 2u);
  // the gap-2 tables are the ones consulted
  const auto q = d.conditional(ctx, 1);
  const auto f = d.forward(1).cond(Sequence{A});
  const auto b = d.backward(2).cond(Sequence{D});
  std::vector<double> w(8, kNegInf);
  for (std::size_t v = 3; v < 8; ++v) w[v] = 0.5 * f.log_probs()[v] + 0.5 * b.log_probs()[v];
  const auto ref = Categorical::from_log_weights(w);
  for (TokenId v = 0; v < 8; ++v) EXPECT_NEAR(q.prob(v), ref.prob(v), 1e-12);
}

TEST(Denoiser, TokensOutsideWindowsDoNotMatter) {
  Rng r(11);
  std::vector<Sequence> corpus;
  for (int n = 0; n < 60; ++n) {
    Sequence s;
    for (int i = 0; i < 9; ++i) s.push_back(static_cast<TokenId>(4 + r.next_u64() % 5));
    corpus.push_back(s);
  }
  const auto d = BidirectionalDenoiser::train(corpus, 2, 0.1, 9, 0.5, 4);
  auto word = [&] { return static_cast<TokenId>(4 + r.next_u64() % 5); };
  for (int t = 0; t < 200; ++t) {
    Sequence ctx;
    for (int i = 0; i < 12; ++i) ctx.push_back(r.uniform() < 0.4 ? Vocabulary::kMask : word());
    const auto i = static_cast<std::size_t>(r.next_u64() % ctx.size());
    ctx[i] = Vocabulary::kMask;
    const auto q = d.conditional(ctx, i);
    EXPECT_NEAR(total_mass(q), 1.0, 1e-9);
    // bigram windows: only the nearest unmasked id on each side is read
    Sequence other = ctx;
    bool seen_left = false, seen_right = false;
    for (std::size_t p = i; p-- > 0;) {
      if (other[p] == Vocabulary::kMask) continue;
      if (seen_left) other[p] = word();
      seen_left = true;
    }
    for (std::size_t p = i + 1; p < other.size(); ++p) {
      if (other[p] == Vocabulary::kMask) continue;
      if (seen_right) other[p] = word();
      seen_right = true;
    }
    EXPECT_EQ(d.conditional(other, i).log_probs(), q.log_probs());
  }
}

TEST(Denoiser, FilledPositionIsAnError) {
  const auto d = BidirectionalDenoiser::train(palindrome(), 2, 0.5, 8);
  const Sequence ctx{A, B, C};
  EXPECT_THROW(d.conditional(ctx, 1), Error);
  EXPECT_THROW(d.conditional(ctx, 7), Error);
}

TEST(Denoiser, DistanceClampsToLargestTable) {
  const auto d = BidirectionalDenoiser::train(palindrome(), 2, 0.5, 8, 0.5, 3);
  EXPECT_EQ(d.max_distance(), 3u);
  EXPECT_EQ(&d.forward(10), &d.forward(3));
  EXPECT_EQ(&d.backward(0), &d.backward(1));
}

}  // namespace
}  // namespace dlmspec
