// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparserec/data.hpp"
#include "sparserec/masked_embedding.hpp"

namespace sparserec {

/// Top-k item lists for a set of users.
struct RankingResult {
  std::size_t k = 20;
  std::vector<std::uint32_t> users;
  std::vector<std::vector<std::uint32_t>> lists;
};

/// Ranks every item for each user in `users` by <e_u, e_i> over stacked
/// embeddings (users first). Items in any `exclude` matrix are skipped; score
/// ties go to the smaller item id.
RankingResult rank_top_k(std::span<const double> embeddings, std::size_t num_users, std::size_t num_items,
                         std::size_t cols, std::span<const std::uint32_t> users,
                         std::span<const CsrMatrix* const> exclude, std::size_t k);

/// Users with at least one positive in `target`.
std::vector<std::uint32_t> evaluable_users(const CsrMatrix& target);

/// Mean over ranked users of |topk ∩ test_u| / |test_u|.
double recall_at_k(const RankingResult& topk, const CsrMatrix& test);
/// Mean over ranked users of DCG / IDCG with 1 / log2(rank + 1) gains.
double ndcg_at_k(const RankingResult& topk, const CsrMatrix& test);

struct Metrics {
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;
};

/// Ranks the evaluable users of `target` and scores both metrics.
Metrics evaluate_ranking(std::span<const double> embeddings, std::size_t num_users, std::size_t num_items,
                         std::size_t cols, const CsrMatrix& target, std::span<const CsrMatrix* const> exclude,
                         std::size_t k);

/// Symmetric per-table int8 codes on the active positions.
struct QuantizedTable {
  MaskMatrix mask;
  /// One code per active position, row-major.
  std::vector<std::int8_t> codes;
  double scale = 1.0;
};

QuantizedTable quantize_int8(const MaskedEmbeddingTable& table);
MaskedEmbeddingTable dequantize(const QuantizedTable& q);

/// Pearson r, or nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct ScatterPoint {
  std::size_t id = 0;
  bool is_user = true;
  std::uint32_t frequency = 0;
  std::size_t size = 0;
};

struct CorrelationReport {
  std::optional<double> users;
  std::optional<double> items;
  std::vector<ScatterPoint> scatter;
};

/// Correlates each row's embedding size (row nnz of the mask) with its
/// training frequency, users and items separately.
CorrelationReport frequency_size_correlation(const MaskMatrix& mask, const FrequencyVector& freqs);

/// CSV with header "id,type,frequency,size".
void write_scatter_csv(const std::filesystem::path& path, const CorrelationReport& report);

}  // namespace sparserec
