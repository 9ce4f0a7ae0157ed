// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/nmf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sparserec/errors.hpp"

namespace sparserec {
namespace {

// Row-major sparse view with explicit values.
struct WeightedCsr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> ptr;
  std::vector<std::uint32_t> idx;
  std::vector<double> val;
};

WeightedCsr weighted(const CsrMatrix& r, std::span<const double> values) {
  WeightedCsr out{r.rows(), r.cols(), {r.row_ptr().begin(), r.row_ptr().end()},
                  {r.col_idx().begin(), r.col_idx().end()}, {}};
  if (values.empty()) {
    out.val.assign(r.nnz(), 1.0);
  } else {
    out.val.assign(values.begin(), values.end());
  }
  return out;
}

WeightedCsr transposed(const WeightedCsr& a) {
  WeightedCsr t{a.cols, a.rows, std::vector<std::size_t>(a.cols + 1, 0), {}, {}};
  for (std::uint32_t c : a.idx) ++t.ptr[c + 1];
  std::partial_sum(t.ptr.begin(), t.ptr.end(), t.ptr.begin());
  t.idx.resize(a.idx.size());
  t.val.resize(a.val.size());
  std::vector<std::size_t> cursor(t.ptr.begin(), t.ptr.end() - 1);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t k = a.ptr[r]; k < a.ptr[r + 1]; ++k) {
      const std::size_t slot = cursor[a.idx[k]]++;
      t.idx[slot] = static_cast<std::uint32_t>(r);
      t.val[slot] = a.val[k];
    }
  }
  return t;
}

// Gram matrix F^T F (k x k) of a row-major (rows x k) factor.
std::vector<double> gram(const std::vector<double>& f, std::size_t rows, std::size_t k) {
  std::vector<double> g(k * k, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = f.data() + i * k;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) g[a * k + b] += row[a] * row[b];
    }
  }
  return g;
}

// One coordinate sweep over `target` (rows x k) with the other factor fixed:
// minimizes 1/2 ||X - target * other^T||^2 + l1 * sum(target), target >= 0.
void sweep(const WeightedCsr& x, std::vector<double>& target, const std::vector<double>& other,
           std::size_t k, double l1) {
  const std::vector<double> og = gram(other, x.cols, k);
  std::vector<double> xo(x.rows * k, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* dst = xo.data() + i * k;
    for (std::size_t p = x.ptr[i]; p < x.ptr[i + 1]; ++p) {
      const double* src = other.data() + static_cast<std::size_t>(x.idx[p]) * k;
      for (std::size_t a = 0; a < k; ++a) dst[a] += x.val[p] * src[a];
    }
  }
  for (std::size_t t = 0; t < k; ++t) {
    const double hess = og[t * k + t];
    if (hess <= 0.0) continue;
    for (std::size_t i = 0; i < x.rows; ++i) {
      double* row = target.data() + i * k;
      double grad = l1 - xo[i * k + t];
      for (std::size_t r = 0; r < k; ++r) grad += og[t * k + r] * row[r];
      row[t] = std::max(row[t] - grad / hess, 0.0);
    }
  }
}

}  // namespace

double nmf_objective(const CsrMatrix& r, std::span<const double> values, const NmfFactors& f, double l1) {
  const std::size_t k = f.rank;
  // ||R - P||^2 = sum_nz (x - p)^2 + (||P||^2 - sum_nz p^2), P = W H^T.
  double on_support = 0.0;
  double p_sq_support = 0.0;
  for (std::size_t i = 0; i < r.rows(); ++i) {
    const auto cols = r.row(i);
    for (std::size_t q = 0; q < cols.size(); ++q) {
      const double x = values.empty() ? 1.0 : values[r.row_ptr()[i] + q];
      double p = 0.0;
      for (std::size_t a = 0; a < k; ++a) p += f.w[i * k + a] * f.h[cols[q] * k + a];
      on_support += (x - p) * (x - p);
      p_sq_support += p * p;
    }
  }
  const auto wg = gram(f.w, f.users, k);
  const auto hg = gram(f.h, f.items, k);
  double p_sq = 0.0;
  for (std::size_t a = 0; a < k * k; ++a) p_sq += wg[a] * hg[a];
  const double off_support = std::max(p_sq - p_sq_support, 0.0);
  const double l1_term = l1 * (std::accumulate(f.w.begin(), f.w.end(), 0.0) +
                               std::accumulate(f.h.begin(), f.h.end(), 0.0));
  return 0.5 * (on_support + off_support) + l1_term;
}

NmfFactors factorize(const CsrMatrix& r, std::span<const double> values, const NmfConfig& cfg) {
  if (cfg.rank == 0) throw ConfigError("NMF rank must be at least 1");
  if (!(cfg.tolerance >= 0.0)) throw ConfigError("NMF tolerance must be nonnegative");
  if (cfg.l1_penalty < 0.0) throw ConfigError("NMF l1 penalty must be nonnegative");
  if (cfg.rank > std::min(r.rows(), r.cols())) {
    throw ConfigError("NMF rank " + std::to_string(cfg.rank) + " exceeds min(m, n)");
  }
  if (!values.empty() && values.size() != r.nnz()) throw DimensionError("NMF values must align with R");
  for (double v : values) {
    if (v < 0.0 || !std::isfinite(v)) throw DataError("NMF input must be finite and nonnegative");
  }

  const WeightedCsr x = weighted(r, values);
  const WeightedCsr xt = transposed(x);
  const std::size_t k = cfg.rank;

  NmfFactors f{r.rows(), r.cols(), k, std::vector<double>(r.rows() * k), std::vector<double>(r.cols() * k), {}};
  const double total = std::accumulate(x.val.begin(), x.val.end(), 0.0);
  const double mean = total / (static_cast<double>(r.rows()) * static_cast<double>(r.cols()));
  const double scale = std::sqrt(mean / static_cast<double>(k));
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : f.h) v = scale * std::abs(normal(rng));
  for (double& v : f.w) v = scale * std::abs(normal(rng));

  double prev = nmf_objective(r, values, f, cfg.l1_penalty);
  f.objective_trace.push_back(prev);
  for (std::size_t it = 0; it < cfg.max_outer_iters; ++it) {
    sweep(x, f.w, f.h, k, cfg.l1_penalty);
    sweep(xt, f.h, f.w, k, cfg.l1_penalty);
    const double cur = nmf_objective(r, values, f, cfg.l1_penalty);
    f.objective_trace.push_back(cur);
    if (cur == 0.0 || prev <= 0.0 || (prev - cur) / prev < cfg.tolerance) break;
    prev = cur;
  }
  return f;
}

MaskMatrix binarize_mask(const NmfFactors& f, double eps) {
  MaskMatrix mask(f.users, f.items, f.rank);
  for (std::size_t i = 0; i < f.users; ++i) {
    for (std::size_t j = 0; j < f.rank; ++j) {
      if (std::abs(f.w[i * f.rank + j]) > eps) mask.set(i, j);
    }
  }
  for (std::size_t i = 0; i < f.items; ++i) {
    for (std::size_t j = 0; j < f.rank; ++j) {
      if (std::abs(f.h[i * f.rank + j]) > eps) mask.set(f.users + i, j);
    }
  }
  return mask;
}

DensityAdjustment adjust_density(MaskMatrix mask, const NmfFactors& f, std::size_t target_count) {
  if (target_count > mask.size()) {
    throw ConfigError("target active count " + std::to_string(target_count) + " exceeds table size " +
                      std::to_string(mask.size()));
  }
  if (mask.rows() != f.users + f.items || mask.cols() != f.rank) throw DimensionError("mask/factor shape mismatch");
  if (mask.nnz() <= target_count) {
    const std::size_t deficit = target_count - mask.nnz();
    return {std::move(mask), deficit};
  }
  struct Entry {
    double magnitude;
    std::size_t row;
    std::size_t col;
  };
  std::vector<Entry> active;
  active.reserve(mask.nnz());
  mask.bits().for_each([&](std::size_t r, std::size_t c) {
    const double v = r < f.users ? f.w[r * f.rank + c] : f.h[(r - f.users) * f.rank + c];
    active.push_back({std::abs(v), r, c});
  });
  const std::size_t excess = mask.nnz() - target_count;
  const auto smaller = [](const Entry& a, const Entry& b) {
    if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  };
  std::nth_element(active.begin(), active.begin() + static_cast<std::ptrdiff_t>(excess - 1), active.end(), smaller);
  for (std::size_t k = 0; k < excess; ++k) mask.reset(active[k].row, active[k].col);
  return {std::move(mask), 0};
}

MaskMatrix uniform_random_mask(std::size_t users, std::size_t items, std::size_t cols,
                               std::size_t target_count, Rng& rng) {
  MaskMatrix mask(users, items, cols);
  const std::size_t total = mask.size();
  if (target_count > total) throw ConfigError("target active count exceeds table size");
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = 0; k < target_count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, total - 1);
    std::swap(order[k], order[pick(rng)]);
    mask.set(order[k] / cols, order[k] % cols);
  }
  return mask;
}

}  // namespace sparserec
