// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "sparserec/data.hpp"
#include "sparserec/dst.hpp"
#include "sparserec/masked_embedding.hpp"
#include "sparserec/recommender.hpp"

namespace sparserec::testing {

/// Mask whose bit (r, c) is on with probability p.
inline MaskMatrix random_mask(std::size_t users, std::size_t items, std::size_t cols, double p, Rng& rng) {
  MaskMatrix mask(users, items, cols);
  std::bernoulli_distribution on(p);
  for (std::size_t r = 0; r < users + items; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (on(rng)) mask.set(r, c);
    }
  }
  return mask;
}

inline MaskMatrix full_mask(std::size_t users, std::size_t items, std::size_t cols) {
  MaskMatrix mask(users, items, cols);
  ParamSet all(users + items, cols);
  all.fill();
  mask.assign(all);
  return mask;
}

/// Table over `mask` with N(0, std) values, zeroed off the mask.
inline MaskedEmbeddingTable random_table(MaskMatrix mask, Rng& rng, double std = 1.0) {
  MaskedEmbeddingTable table(std::move(mask));
  std::normal_distribution<double> normal(0.0, std);
  for (double& v : table.mutable_values()) v = normal(rng);
  apply_mask(table);
  return table;
}

/// Each user gets `per_user` distinct random items.
inline CsrMatrix random_interactions(std::size_t users, std::size_t items, std::size_t per_user, Rng& rng) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::vector<std::uint32_t> ids(items);
  for (std::uint32_t i = 0; i < items; ++i) ids[i] = i;
  for (std::uint32_t u = 0; u < users; ++u) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t k = 0; k < per_user; ++k) pairs.emplace_back(u, ids[k]);
  }
  return CsrMatrix::from_pairs(users, items, std::move(pairs));
}

/// Dense normalized adjacency over the stacked (users, items) graph.
inline std::vector<double> dense_adjacency(const CsrMatrix& train) {
  const std::size_t m = train.rows();
  const std::size_t nodes = m + train.cols();
  std::vector<double> deg(nodes, 0.0);
  for (std::size_t u = 0; u < m; ++u) {
    for (std::uint32_t i : train.row(u)) {
      deg[u] += 1.0;
      deg[m + i] += 1.0;
    }
  }
  std::vector<double> a(nodes * nodes, 0.0);
  for (std::size_t u = 0; u < m; ++u) {
    for (std::uint32_t i : train.row(u)) {
      const double w = 1.0 / std::sqrt(deg[u] * deg[m + i]);
      a[u * nodes + m + i] = w;
      a[(m + i) * nodes + u] = w;
    }
  }
  return a;
}

/// y = A x for dense square A and row-major x with `cols` columns.
inline std::vector<double> dense_multiply(const std::vector<double>& a, const std::vector<double>& x,
                                          std::size_t cols) {
  const std::size_t n = x.size() / cols;
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      const double w = a[r * n + k];
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += w * x[k * cols + c];
    }
  }
  return y;
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Dense gradient of the BPR loss w.r.t. every position of W, computed
// straight from the definitions.
inline std::vector<double> dense_gradient(const MaskedEmbeddingTable& table, const std::vector<BprTriplet>& triplets,
                                   const CsrMatrix* train, std::size_t layers, double l2) {
  const std::size_t s = table.cols();
  const std::size_t m = table.user_rows();
  std::vector<double> w(table.values().begin(), table.values().end());
  std::vector<double> adj;
  std::vector<double> f = w;
  if (train != nullptr) {
    adj = dense_adjacency(*train);
    std::vector<double> layer = w;
    for (std::size_t k = 0; k < layers; ++k) {
      layer = dense_multiply(adj, layer, s);
      for (std::size_t q = 0; q < f.size(); ++q) f[q] += layer[q];
    }
    for (double& v : f) v /= static_cast<double>(layers + 1);
  }
  std::vector<double> df(w.size(), 0.0);
  const double batch = static_cast<double>(triplets.size());
  for (const auto& t : triplets) {
    const std::size_t u = t.user;
    const std::size_t i = m + t.pos;
    const std::size_t j = m + t.neg;
    double x = 0.0;
    for (std::size_t c = 0; c < s; ++c) x += f[u * s + c] * (f[i * s + c] - f[j * s + c]);
    const double g = -sigmoid(-x) / batch;
    for (std::size_t c = 0; c < s; ++c) {
      df[u * s + c] += g * (f[i * s + c] - f[j * s + c]);
      df[i * s + c] += g * f[u * s + c];
      df[j * s + c] -= g * f[u * s + c];
    }
  }
  std::vector<double> dw = df;
  if (train != nullptr) {
    std::vector<double> layer = df;
    for (std::size_t k = 0; k < layers; ++k) {
      layer = dense_multiply(adj, layer, s);
      for (std::size_t q = 0; q < dw.size(); ++q) dw[q] += layer[q];
    }
    for (double& v : dw) v /= static_cast<double>(layers + 1);
  }
  for (std::size_t q = 0; q < dw.size(); ++q) dw[q] += 2.0 * l2 * w[q];
  return dw;
}

using Entry = std::tuple<double, std::size_t, std::size_t>;

// Sort-and-filter prune oracle over one side's stacked rows [first, last).
inline ParamSet oracle_prune(const MaskedEmbeddingTable& table, double rho, std::size_t first, std::size_t last) {
  std::vector<Entry> active;
  for (std::size_t r = first; r < last; ++r) {
    for (std::size_t c = 0; c < table.cols(); ++c) {
      if (table.mask().test(r, c)) active.emplace_back(std::abs(table.at(r, c)), r, c);
    }
  }
  std::sort(active.begin(), active.end());
  const auto k = static_cast<std::size_t>(std::llround(rho * static_cast<double>(active.size())));
  ParamSet out(table.rows(), table.cols());
  for (std::size_t q = 0; q < k; ++q) out.set(std::get<1>(active[q]), std::get<2>(active[q]));
  return out;
}

// Candidates in sampled rows inactive in `post`, ordered by |C| descending
// then (row, col).
inline std::vector<Entry> oracle_candidates(const ExplorationState& state, const MaskMatrix& post, bool users) {
  std::vector<Entry> pool;
  for (std::size_t r = 0; r < post.rows(); ++r) {
    if ((r < state.user_rows()) != users || state.slot(r) < 0) continue;
    const auto acc = state.accumulator_row(r);
    for (std::size_t c = 0; c < post.cols(); ++c) {
      if (!post.test(r, c)) pool.emplace_back(-std::abs(acc[c]), r, c);
    }
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline RegrowSelection oracle_regrow(const ExplorationState& state, double mu, std::size_t total, const MaskMatrix& post) {
  const auto up = oracle_candidates(state, post, true);
  const auto ip = oracle_candidates(state, post, false);
  std::size_t want_u = std::min<std::size_t>(total, std::llround(mu * static_cast<double>(total)));
  std::size_t want_i = total - want_u;
  std::size_t tu = std::min(want_u, up.size());
  std::size_t ti = std::min(want_i, ip.size());
  std::size_t rest = total - tu - ti;
  const std::size_t eu = std::min(rest, up.size() - tu);
  tu += eu;
  rest -= eu;
  const std::size_t ei = std::min(rest, ip.size() - ti);
  ti += ei;
  rest -= ei;
  RegrowSelection sel{ParamSet(post.rows(), post.cols()), ParamSet(post.rows(), post.cols()), rest};
  for (std::size_t q = 0; q < tu; ++q) sel.users.set(std::get<1>(up[q]), std::get<2>(up[q]));
  for (std::size_t q = 0; q < ti; ++q) sel.items.set(std::get<1>(ip[q]), std::get<2>(ip[q]));
  return sel;
}

// Values drawn from a tiny set so ties are common.
inline MaskedEmbeddingTable tie_heavy_table(MaskMatrix mask, Rng& rng) {
  MaskedEmbeddingTable table(std::move(mask));
  std::uniform_int_distribution<int> level(-3, 3);
  for (double& v : table.mutable_values()) v = 0.5 * level(rng);
  apply_mask(table);
  return table;
}

inline void fill_accumulators(ExplorationState& state, Rng& rng, bool ties) {
  std::uniform_int_distribution<int> level(-2, 2);
  std::normal_distribution<double> normal;
  for (std::size_t r = 0; r < state.sampled_rows().rows(); ++r) {
    if (state.slot(r) < 0) continue;
    for (double& v : state.accumulator_row(r)) v = ties ? 0.25 * level(rng) : normal(rng);
  }
}

struct HandMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;
};

// Full sort per user with train items removed, hits counted one by one.
inline HandMetrics brute_force_metrics(const std::vector<double>& emb, std::size_t m, std::size_t n, std::size_t d,
                                       const CsrMatrix& train, const std::vector<std::vector<std::uint32_t>>& test_rows,
                                       std::size_t k) {
  HandMetrics out;
  for (std::uint32_t u = 0; u < m; ++u) {
    if (test_rows[u].empty()) continue;
    std::vector<std::pair<double, std::uint32_t>> scored;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (train.contains(u, i)) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += emb[u * d + c] * emb[(m + i) * d + c];
      scored.emplace_back(-s, i);
    }
    std::sort(scored.begin(), scored.end());
    const std::set<std::uint32_t> pos(test_rows[u].begin(), test_rows[u].end());
    std::size_t hits = 0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, scored.size()); ++r) {
      if (pos.count(scored[r].second)) {
        ++hits;
        dcg += 1.0 / std::log2(r + 2.0);
      }
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, pos.size()); ++r) idcg += 1.0 / std::log2(r + 2.0);
    out.recall += static_cast<double>(hits) / static_cast<double>(pos.size());
    out.ndcg += dcg / idcg;
    ++out.users;
  }
  out.recall /= static_cast<double>(out.users);
  out.ndcg /= static_cast<double>(out.users);
  return out;
}

}  // namespace sparserec::testing
