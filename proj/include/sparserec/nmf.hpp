// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sparserec/data.hpp"
#include "sparserec/masked_embedding.hpp"

namespace sparserec {

struct NmfConfig {
  std::size_t rank = 32;
  std::size_t max_outer_iters = 200;
  /// Stop once (f_prev - f) / f_prev falls below this; 0 runs every iteration.
  double tolerance = 1e-4;
  double l1_penalty = 0.1;
  std::uint64_t seed = 0;
};

/// R ~ W H^T with W (m x rank) and H (n x rank), both row-major.
struct NmfFactors {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t rank = 0;
  std::vector<double> w;
  std::vector<double> h;
  /// Objective after initialization, then after every outer iteration.
  std::vector<double> objective_trace;
};

/// 1/2 ||R - W H^T||_F^2 + l1 (||W||_1 + ||H||_1). Empty `values` means a
/// binary R.
double nmf_objective(const CsrMatrix& r, std::span<const double> values, const NmfFactors& f, double l1);

/// Coordinate-descent NMF with an L1 penalty. Each outer iteration sweeps every
/// coordinate of W then of H, solving the one-dimensional problem exactly, so
/// the objective never increases. `values` aligns with `r.col_idx()`; pass an
/// empty span for binary interactions.
NmfFactors factorize(const CsrMatrix& r, std::span<const double> values, const NmfConfig& cfg);
inline NmfFactors factorize(const CsrMatrix& r, const NmfConfig& cfg) { return factorize(r, {}, cfg); }

inline constexpr double kNmfZero = 1e-12;

/// M^U_ij = [|W_ij| > eps], M^V_ij = [|H_ij| > eps].
MaskMatrix binarize_mask(const NmfFactors& f, double eps = kNmfZero);

struct DensityAdjustment {
  MaskMatrix mask;
  /// Positions still missing; filled by the first exploration's regrowth.
  std::size_t regrow_deficit = 0;
};

/// Trims an over-dense binarized mask to `target_count` by dropping the active
/// positions with the smallest factor magnitude (one ordering across W and H,
/// ties by (row, col)). An under-dense mask is returned unchanged with its
/// deficit.
DensityAdjustment adjust_density(MaskMatrix mask, const NmfFactors& f, std::size_t target_count);

/// Uniformly random mask with exactly `target_count` active positions.
MaskMatrix uniform_random_mask(std::size_t users, std::size_t items, std::size_t cols,
                               std::size_t target_count, Rng& rng);

}  // namespace sparserec
