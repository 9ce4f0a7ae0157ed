// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>
#include <sstream>
#include <utility>

#include <gtest/gtest.h>

#include "sparserec/checkpoint.hpp"
#include "sparserec/errors.hpp"
#include "sparserec/masked_embedding.hpp"
#include "sparserec/recommender.hpp"
#include "test_support.hpp"

namespace sparserec {
namespace {

using testing::full_mask;
using testing::random_mask;
using testing::random_table;

TEST(ParamSetTest, SetAlgebraMatchesStdSet) {
  Rng rng(3);
  std::bernoulli_distribution coin(0.4);
  ParamSet a(9, 70);
  ParamSet b(9, 70);
  std::set<std::pair<std::size_t, std::size_t>> sa;
  std::set<std::pair<std::size_t, std::size_t>> sb;
  for (std::size_t r = 0; r < 9; ++r) {
    for (std::size_t c = 0; c < 70; ++c) {
      if (coin(rng)) a.set(r, c), sa.insert({r, c});
      if (coin(rng)) b.set(r, c), sb.insert({r, c});
    }
  }
  const auto collect = [](const ParamSet& p) {
    std::set<std::pair<std::size_t, std::size_t>> out;
    p.for_each([&](std::size_t r, std::size_t c) { out.insert({r, c}); });
    return out;
  };
  std::set<std::pair<std::size_t, std::size_t>> uni = sa;
  uni.insert(sb.begin(), sb.end());
  std::set<std::pair<std::size_t, std::size_t>> inter;
  std::set<std::pair<std::size_t, std::size_t>> diff;
  for (const auto& p : sa) (sb.count(p) ? inter : diff).insert(p);

  EXPECT_EQ(collect(a | b), uni);
  EXPECT_EQ(collect(a & b), inter);
  EXPECT_EQ(collect(a - b), diff);
  EXPECT_EQ((a | b).count(), uni.size());
  EXPECT_TRUE((a & b).is_subset_of(a));
  EXPECT_FALSE((a - b).intersects(b));
}

TEST(ParamSetTest, ShapeMismatchThrows) {
  ParamSet a(2, 3);
  ParamSet b(3, 2);
  EXPECT_THROW(a |= b, DimensionError);
}

TEST(ParamSetTest, RowExpanded) {
  const std::size_t rows[] = {1, 3};
  const ParamSet p = row_expanded(rows, 5, 4);
  EXPECT_EQ(p.count(), 8u);
  EXPECT_EQ(p.row_count(1), 4u);
  EXPECT_EQ(p.row_count(0), 0u);
  const std::size_t bad[] = {5};
  EXPECT_THROW(row_expanded(bad, 5, 4), IndexError);
}

TEST(DensityTest, FullMaskIsOne) {
  EXPECT_DOUBLE_EQ(density(full_mask(1, 2, 4)), 1.0);
}

TEST(DensityTest, EmptyMaskIsZero) {
  EXPECT_DOUBLE_EQ(density(MaskMatrix(1, 2, 4)), 0.0);
}

TEST(DensityTest, TwoOfEight) {
  MaskMatrix mask(1, 1, 4);
  mask.set(0, 1);
  mask.set(1, 3);
  EXPECT_DOUBLE_EQ(density(mask), 0.25);
}

TEST(DensityTest, TargetCount) {
  EXPECT_EQ(target_active_count(0.25, 500, 16), 2000u);
  EXPECT_EQ(target_active_count(0.125, 3, 3), 1u);
  EXPECT_THROW(target_active_count(1.5, 2, 2), ConfigError);
}

TEST(MaskMatrixTest, IncrementalCountMatchesPopcount) {
  Rng rng(5);
  MaskMatrix mask = random_mask(7, 9, 13, 0.3, rng);
  std::uniform_int_distribution<std::size_t> row(0, 15);
  std::uniform_int_distribution<std::size_t> col(0, 12);
  for (int k = 0; k < 500; ++k) {
    if (k % 2) {
      mask.set(row(rng), col(rng));
    } else {
      mask.reset(row(rng), col(rng));
    }
    ASSERT_EQ(mask.nnz(), mask.recount());
  }
  EXPECT_EQ(mask.user_nnz() + mask.item_nnz(), mask.nnz());
}

TEST(ApplyMaskTest, ElementwiseProduct) {
  MaskMatrix mask(1, 1, 2);
  mask.set(0, 0);
  mask.set(1, 1);
  MaskedEmbeddingTable table(mask);
  auto v = table.mutable_values();
  v[0] = 1;
  v[1] = 2;
  v[2] = 3;
  v[3] = 4;
  apply_mask(table);
  EXPECT_EQ(std::vector<double>(table.values().begin(), table.values().end()), (std::vector<double>{1, 0, 0, 4}));
}

TEST(ApplyMaskTest, FullMaskIsIdentity) {
  Rng rng(1);
  MaskedEmbeddingTable table(full_mask(3, 4, 5));
  std::normal_distribution<double> normal;
  for (double& v : table.mutable_values()) v = normal(rng);
  const std::vector<double> before(table.values().begin(), table.values().end());
  apply_mask(table);
  EXPECT_EQ(std::vector<double>(table.values().begin(), table.values().end()), before);
}

TEST(ApplyMaskTest, EmptyMaskAnnihilates) {
  MaskedEmbeddingTable table(MaskMatrix(2, 2, 3));
  for (double& v : table.mutable_values()) v = 7.0;
  apply_mask(table);
  for (double v : table.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(table.inconsistent_positions(), 0u);
}

TEST(ApplyMaskTest, BumpsVersion) {
  MaskedEmbeddingTable table(MaskMatrix(1, 1, 2));
  const auto v0 = table.version();
  apply_mask(table);
  EXPECT_GT(table.version(), v0);
}

TEST(SetMaskFromTest, PruneOneGrowAnother) {
  MaskMatrix mask(1, 1, 2);
  mask.set(0, 0);
  ParamSet pruned(2, 2);
  pruned.set(0, 0);
  ParamSet grown(2, 2);
  grown.set(1, 1);
  set_mask_from((mask.bits() - pruned) | grown, mask);
  EXPECT_EQ(mask.nnz(), 1u);
  EXPECT_TRUE(mask.test(1, 1));
  EXPECT_FALSE(mask.test(0, 0));
}

TEST(SetMaskFromTest, EmptyUpdateIsIdentity) {
  Rng rng(2);
  MaskMatrix mask = random_mask(4, 4, 4, 0.5, rng);
  const MaskMatrix before = mask;
  const ParamSet none(8, 4);
  set_mask_from((mask.bits() - none) | none, mask);
  EXPECT_EQ(mask, before);
}

TEST(SetMaskFromTest, CountMatchesEnumeration) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    MaskMatrix mask = random_mask(8, 8, 8, 0.4, rng);
    const ParamSet active = mask.bits();
    std::bernoulli_distribution coin(0.3);
    ParamSet pruned(16, 8);
    ParamSet grown(16, 8);
    std::size_t expect_grown = 0;
    active.for_each([&](std::size_t r, std::size_t c) {
      if (coin(rng)) pruned.set(r, c);
    });
    const ParamSet kept = active - pruned;
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        if (!kept.test(r, c) && coin(rng)) {
          grown.set(r, c);
          ++expect_grown;
        }
      }
    }
    set_mask_from(kept | grown, mask);
    EXPECT_EQ(mask.nnz(), active.count() - pruned.count() + expect_grown);
    EXPECT_EQ(mask.nnz(), mask.recount());
  }
}

TEST(ZeroInitTest, GrownPositionIsZero) {
  Rng rng(4);
  MaskMatrix mask = full_mask(2, 2, 4);
  mask.reset(2, 3);
  MaskedEmbeddingTable table = random_table(mask, rng);
  ParamSet grown(4, 4);
  grown.set(2, 3);
  zero_init_regrown(table, grown);
  EXPECT_EQ(table.at(2, 3), 0.0);
}

TEST(ZeroInitTest, EmptyGrowLeavesValues) {
  Rng rng(4);
  MaskedEmbeddingTable table = random_table(random_mask(2, 3, 4, 0.5, rng), rng);
  const std::vector<double> before(table.values().begin(), table.values().end());
  zero_init_regrown(table, ParamSet(5, 4));
  EXPECT_EQ(std::vector<double>(table.values().begin(), table.values().end()), before);
}

TEST(ZeroInitTest, OverlapWithActiveThrows) {
  MaskMatrix mask(1, 1, 2);
  mask.set(0, 0);
  MaskedEmbeddingTable table(mask);
  ParamSet grown(2, 2);
  grown.set(0, 0);
  EXPECT_THROW(zero_init_regrown(table, grown), ContractError);
}

TEST(ZeroInitTest, RegrowthLeavesScoresUnchanged) {
  Rng rng(8);
  MaskedEmbeddingTable table = random_table(random_mask(6, 8, 4, 0.5, rng), rng);
  const CsrMatrix train = testing::random_interactions(6, 8, 3, rng);
  const auto triplets = sample_bpr_triplets(train, 32, rng);
  const Recommender model({ModelKind::kBprMf, 1, 0.0});
  const auto before = model.forward(table, triplets);

  ParamSet grown(14, 4);
  std::size_t placed = 0;
  for (std::size_t r = 0; r < 14 && placed < 5; ++r) {
    for (std::size_t c = 0; c < 4 && placed < 5; ++c) {
      if (!table.mask().test(r, c)) grown.set(r, c), ++placed;
    }
  }
  ASSERT_EQ(placed, 5u);
  zero_init_regrown(table, grown);
  table.replace_mask(table.mask().bits() | grown);
  apply_mask(table);
  const auto after = model.forward(table, triplets);
  EXPECT_EQ(after.pos_scores, before.pos_scores);
  EXPECT_EQ(after.neg_scores, before.neg_scores);
}

TEST(CheckpointTest, Float64RoundTrip) {
  Rng rng(9);
  const MaskedEmbeddingTable table = random_table(random_mask(5, 7, 11, 0.3, rng), rng);
  std::stringstream buf;
  write_checkpoint(buf, table, 0.3);
  const LoadedCheckpoint back = read_checkpoint(buf);
  EXPECT_EQ(back.header.users, 5u);
  EXPECT_EQ(back.header.items, 7u);
  EXPECT_EQ(back.header.cols, 11u);
  EXPECT_EQ(back.header.encoding, ValueEncoding::kFloat64);
  EXPECT_EQ(back.table.mask(), table.mask());
  EXPECT_EQ(std::vector<double>(back.table.values().begin(), back.table.values().end()),
            std::vector<double>(table.values().begin(), table.values().end()));
}

TEST(CheckpointTest, Int8RoundTripKeepsCodes) {
  Rng rng(10);
  const MaskMatrix mask = random_mask(3, 4, 9, 0.5, rng);
  std::vector<std::int8_t> codes(mask.nnz());
  std::uniform_int_distribution<int> code(-127, 127);
  for (auto& c : codes) c = static_cast<std::int8_t>(code(rng));
  std::stringstream buf;
  write_checkpoint_int8(buf, mask, codes, 0.01, 0.5);
  const LoadedCheckpoint back = read_checkpoint(buf);
  EXPECT_EQ(back.header.encoding, ValueEncoding::kInt8);
  EXPECT_DOUBLE_EQ(back.header.scale, 0.01);
  EXPECT_EQ(back.codes, codes);
  EXPECT_EQ(back.table.mask(), mask);
  std::size_t k = 0;
  mask.bits().for_each([&](std::size_t r, std::size_t c) { EXPECT_DOUBLE_EQ(back.table.at(r, c), codes[k++] * 0.01); });
  EXPECT_EQ(back.table.inconsistent_positions(), 0u);
}

TEST(CheckpointTest, MaskBitsAreRowMajorLsbFirst) {
  MaskMatrix mask(1, 1, 5);
  mask.set(0, 0);
  mask.set(1, 2);
  MaskedEmbeddingTable table(mask);
  std::stringstream buf;
  write_checkpoint(buf, table, 0.2);
  const std::string bytes = buf.str();
  // magic 4 + version 4 + m, n, s 24 + density 8 + encoding 1
  const std::size_t mask_at = 41;
  ASSERT_GE(bytes.size(), mask_at + 2);
  EXPECT_EQ(bytes.substr(0, 4), "SRCK");
  // bit 0 and bit 5 + 2 = 7
  EXPECT_EQ(static_cast<unsigned char>(bytes[mask_at]), 0x81);
  EXPECT_EQ(static_cast<unsigned char>(bytes[mask_at + 1]), 0x00);
}

TEST(CheckpointTest, RejectsBadMagicAndTruncation) {
  std::stringstream bad("XXXX0000");
  EXPECT_THROW(read_checkpoint(bad), DataError);
  Rng rng(1);
  const MaskedEmbeddingTable table = random_table(full_mask(2, 2, 3), rng);
  std::stringstream buf;
  write_checkpoint(buf, table, 1.0);
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 5);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_checkpoint(cut), DataError);
}

}  // namespace
}  // namespace sparserec
