// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "sparserec/data.hpp"
#include "sparserec/errors.hpp"
#include "test_support.hpp"

namespace sparserec {
namespace {

RawInteractions parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in, "inline");
}

TEST(ParseInteractionsTest, ThreePairs) {
  const RawInteractions raw = parse("0\t0\n0\t1\n1\t0\n");
  EXPECT_EQ(raw.num_users, 2u);
  EXPECT_EQ(raw.num_items, 2u);
  EXPECT_EQ(raw.pairs.size(), 3u);
}

TEST(ParseInteractionsTest, DuplicateCountedOnce) {
  const RawInteractions raw = parse("0 0\n0 1\n0 0\n");
  EXPECT_EQ(raw.pairs.size(), 2u);
}

TEST(ParseInteractionsTest, RemapsIdsAndSkipsComments) {
  const RawInteractions raw = parse("# header\n\n42 alpha 5 881250949\n7 beta\n42 beta\n");
  EXPECT_EQ(raw.num_users, 2u);
  EXPECT_EQ(raw.num_items, 2u);
  EXPECT_EQ(raw.user_ids[0], "42");
  EXPECT_EQ(raw.item_ids[1], "beta");
  EXPECT_EQ(raw.pairs.size(), 3u);
}

TEST(ParseInteractionsTest, MalformedLineReportsLineNumber) {
  try {
    parse("0 0\nlonely\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(ParseInteractionsTest, EmptyInputThrows) {
  EXPECT_THROW(parse("# nothing\n"), DataError);
}

TEST(CsrMatrixTest, OutOfRangePairThrows) {
  EXPECT_THROW(CsrMatrix::from_pairs(2, 2, {{0, 2}}), IndexError);
}

TEST(CsrMatrixTest, TransposeRoundTrip) {
  Rng rng(3);
  const CsrMatrix a = testing::random_interactions(9, 14, 4, rng);
  EXPECT_EQ(a.transpose().transpose(), a);
  EXPECT_EQ(a.transpose().nnz(), a.nnz());
}

RawInteractions users_with(std::size_t users, std::size_t per_user) {
  RawInteractions raw;
  raw.num_users = users;
  raw.num_items = per_user;
  for (std::uint32_t u = 0; u < users; ++u) {
    raw.user_ids.push_back(std::to_string(u));
    for (std::uint32_t i = 0; i < per_user; ++i) raw.pairs.push_back({u, i});
  }
  for (std::uint32_t i = 0; i < per_user; ++i) raw.item_ids.push_back(std::to_string(i));
  return raw;
}

TEST(SplitTest, TenInteractionsSplit712) {
  const InteractionDataset d = split_dataset(users_with(1, 10), {}, 1);
  EXPECT_EQ(d.train.row_nnz(0), 7u);
  EXPECT_EQ(d.valid.row_nnz(0), 1u);
  EXPECT_EQ(d.test.row_nnz(0), 2u);
}

TEST(SplitTest, SingleInteractionStaysInTrain) {
  const InteractionDataset d = split_dataset(users_with(1, 1), {}, 1);
  EXPECT_EQ(d.train.nnz(), 1u);
  EXPECT_EQ(d.valid.nnz(), 0u);
  EXPECT_EQ(d.test.nnz(), 0u);
}

TEST(SplitTest, GlobalCountsAndDisjointness) {
  const InteractionDataset d = split_dataset(users_with(1000, 10), {}, 5);
  EXPECT_EQ(d.train.nnz(), 7000u);
  EXPECT_EQ(d.valid.nnz(), 1000u);
  EXPECT_EQ(d.test.nnz(), 2000u);
  for (std::size_t u = 0; u < 1000; u += 97) {
    for (std::uint32_t i : d.test.row(u)) {
      EXPECT_FALSE(d.train.contains(u, i));
      EXPECT_FALSE(d.valid.contains(u, i));
    }
  }
}

TEST(SplitTest, DeterministicInSeed) {
  const RawInteractions raw = users_with(50, 12);
  EXPECT_EQ(split_dataset(raw, {}, 9).test, split_dataset(raw, {}, 9).test);
  EXPECT_NE(split_dataset(raw, {}, 9).test, split_dataset(raw, {}, 10).test);
}

TEST(SplitTest, BadRatiosThrow) {
  EXPECT_THROW(split_dataset(users_with(2, 5), {0.5, 0.1, 0.1}, 1), ConfigError);
}

TEST(SplitCacheTest, RoundTrip) {
  const RawInteractions raw = users_with(20, 10);
  const InteractionDataset d = split_dataset(raw, {}, 3);
  const auto path = std::filesystem::temp_directory_path() / "sparserec_split_cache_test.tsv";
  write_split_cache(path, raw, d);
  const auto [raw2, d2] = read_split_cache(path);
  std::filesystem::remove(path);
  EXPECT_EQ(raw2.pairs.size(), raw.pairs.size());
  EXPECT_EQ(d2.train.nnz(), d.train.nnz());
  EXPECT_EQ(d2.valid.nnz(), d.valid.nnz());
  EXPECT_EQ(d2.test.nnz(), d.test.nnz());
}

TEST(FrequencyTest, SmallExample) {
  const CsrMatrix train = CsrMatrix::from_pairs(2, 2, {{0, 0}, {0, 1}, {1, 0}});
  const FrequencyVector f = compute_frequencies(train);
  EXPECT_EQ(f.users, (std::vector<std::uint32_t>{2, 1}));
  EXPECT_EQ(f.items, (std::vector<std::uint32_t>{2, 1}));
}

TEST(FrequencyTest, EmptyRowIsZero) {
  const CsrMatrix train = CsrMatrix::from_pairs(3, 2, {{0, 0}, {2, 1}});
  EXPECT_EQ(compute_frequencies(train).users[1], 0u);
}

TEST(FrequencyTest, MatchesDenseSums) {
  Rng rng(12);
  std::bernoulli_distribution coin(0.2);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::vector<std::uint32_t> rows(50, 0);
  std::vector<std::uint32_t> cols(80, 0);
  for (std::uint32_t u = 0; u < 50; ++u) {
    for (std::uint32_t i = 0; i < 80; ++i) {
      if (coin(rng)) {
        pairs.emplace_back(u, i);
        ++rows[u];
        ++cols[i];
      }
    }
  }
  const FrequencyVector f = compute_frequencies(CsrMatrix::from_pairs(50, 80, pairs));
  EXPECT_EQ(f.users, rows);
  EXPECT_EQ(f.items, cols);
}

TEST(TripletSamplerTest, OnlyLegalTriplet) {
  const CsrMatrix train = CsrMatrix::from_pairs(1, 2, {{0, 0}});
  Rng rng(1);
  for (const auto& t : sample_bpr_triplets(train, 100, rng)) EXPECT_EQ(t, (BprTriplet{0, 0, 1}));
}

TEST(TripletSamplerTest, BatchSize) {
  Rng rng(2);
  const CsrMatrix train = testing::random_interactions(30, 40, 5, rng);
  EXPECT_EQ(sample_bpr_triplets(train, 8000, rng).size(), 8000u);
  EXPECT_THROW(sample_bpr_triplets(train, 0, rng), ConfigError);
}

TEST(TripletSamplerTest, NegativesAreNeverPositives) {
  Rng rng(3);
  const CsrMatrix train = testing::random_interactions(20, 12, 6, rng);
  for (const auto& t : sample_bpr_triplets(train, 2000, rng)) {
    EXPECT_TRUE(train.contains(t.user, t.pos));
    EXPECT_FALSE(train.contains(t.user, t.neg));
  }
}

TEST(TripletSamplerTest, SaturatedUsersSkipped) {
  const CsrMatrix train = CsrMatrix::from_pairs(2, 2, {{0, 0}, {0, 1}, {1, 1}});
  Rng rng(4);
  for (const auto& t : sample_bpr_triplets(train, 200, rng)) EXPECT_EQ(t.user, 1u);
  const CsrMatrix full = CsrMatrix::from_pairs(1, 1, {{0, 0}});
  EXPECT_THROW(TripletSampler{full}, DataError);
}

TEST(TripletSamplerTest, PositivePairsUniform) {
  // 5x5 toy set, 10 positive pairs; chi-square against uniform.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t u = 0; u < 5; ++u) {
    pairs.emplace_back(u, u);
    pairs.emplace_back(u, (u + 1) % 5);
  }
  const CsrMatrix train = CsrMatrix::from_pairs(5, 5, pairs);
  Rng rng(77);
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> counts;
  const int draws = 10000;
  for (const auto& t : sample_bpr_triplets(train, draws, rng)) ++counts[{t.user, t.pos}];
  ASSERT_EQ(counts.size(), 10u);
  const double expect = draws / 10.0;
  const double sd = std::sqrt(draws * 0.1 * 0.9);
  double chi2 = 0.0;
  for (const auto& [pair, c] : counts) {
    EXPECT_LT(std::abs(c - expect), 3 * sd);
    chi2 += (c - expect) * (c - expect) / expect;
  }
  // 9 degrees of freedom, p = 0.001
  EXPECT_LT(chi2, 27.88);
}

TEST(SynthTest, ShapeAndDeterminism) {
  SynthConfig cfg;
  cfg.users = 120;
  cfg.items = 200;
  cfg.interactions = 4000;
  cfg.min_per_user = 10;
  const RawInteractions a = synthesize_interactions(cfg);
  const RawInteractions b = synthesize_interactions(cfg);
  EXPECT_EQ(a.pairs, b.pairs);
  EXPECT_EQ(a.num_users, 120u);
  EXPECT_LE(a.num_items, 200u);
  EXPECT_NEAR(static_cast<double>(a.pairs.size()), 4000.0, 400.0);
  std::vector<std::size_t> per_user(a.num_users, 0);
  for (const auto& p : a.pairs) ++per_user[p.user];
  for (std::size_t k : per_user) EXPECT_GE(k, 10u);
}

TEST(SynthTest, FileRoundTripKeepsPairs) {
  SynthConfig cfg;
  cfg.users = 40;
  cfg.items = 60;
  cfg.interactions = 900;
  cfg.min_per_user = 5;
  const RawInteractions a = synthesize_interactions(cfg);
  const auto path = std::filesystem::temp_directory_path() / "sparserec_synth_test.txt";
  write_interactions(path, a);
  const RawInteractions b = load_interactions(path);
  std::filesystem::remove(path);
  EXPECT_EQ(b.pairs, a.pairs);
}

}  // namespace
}  // namespace sparserec
