// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sparserec/errors.hpp"

namespace sparserec {

RankingResult rank_top_k(std::span<const double> embeddings, std::size_t num_users, std::size_t num_items,
                         std::size_t cols, std::span<const std::uint32_t> users,
                         std::span<const CsrMatrix* const> exclude, std::size_t k) {
  if (embeddings.size() != (num_users + num_items) * cols) throw DimensionError("embedding table shape mismatch");
  if (k == 0) throw ConfigError("k must be at least 1");
  RankingResult out;
  out.k = k;
  out.users.assign(users.begin(), users.end());
  out.lists.reserve(users.size());
  std::vector<std::uint8_t> banned(num_items, 0);
  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(num_items);
  const double* items = embeddings.data() + num_users * cols;
  const auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  for (std::uint32_t u : users) {
    if (u >= num_users) throw IndexError("user id out of range");
    for (const CsrMatrix* m : exclude) {
      for (std::uint32_t i : m->row(u)) banned[i] = 1;
    }
    const double* eu = embeddings.data() + static_cast<std::size_t>(u) * cols;
    scored.clear();
    for (std::uint32_t i = 0; i < num_items; ++i) {
      if (banned[i]) continue;
      const double* ei = items + static_cast<std::size_t>(i) * cols;
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += eu[c] * ei[c];
      scored.emplace_back(s, i);
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    std::vector<std::uint32_t> list(take);
    for (std::size_t q = 0; q < take; ++q) list[q] = scored[q].second;
    out.lists.push_back(std::move(list));
    for (const CsrMatrix* m : exclude) {
      for (std::uint32_t i : m->row(u)) banned[i] = 0;
    }
  }
  return out;
}

std::vector<std::uint32_t> evaluable_users(const CsrMatrix& target) {
  std::vector<std::uint32_t> users;
  for (std::size_t u = 0; u < target.rows(); ++u) {
    if (target.row_nnz(u) > 0) users.push_back(static_cast<std::uint32_t>(u));
  }
  return users;
}

namespace {

template <typename PerUser>
double mean_over_users(const RankingResult& topk, const CsrMatrix& test, PerUser per_user) {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < topk.users.size(); ++q) {
    const auto truth = test.row(topk.users[q]);
    if (truth.empty()) continue;
    total += per_user(topk.lists[q], truth);
    ++counted;
  }
  if (counted == 0) throw DataError("no evaluable users (every ranked user lacks test positives)");
  return total / static_cast<double>(counted);
}

}  // namespace

double recall_at_k(const RankingResult& topk, const CsrMatrix& test) {
  return mean_over_users(topk, test, [&](const auto& list, std::span<const std::uint32_t> truth) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < std::min(list.size(), topk.k); ++r) {
      hits += std::binary_search(truth.begin(), truth.end(), list[r]) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
  });
}

double ndcg_at_k(const RankingResult& topk, const CsrMatrix& test) {
  return mean_over_users(topk, test, [&](const auto& list, std::span<const std::uint32_t> truth) {
    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min(list.size(), topk.k); ++r) {
      if (std::binary_search(truth.begin(), truth.end(), list[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(truth.size(), topk.k); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
  });
}

Metrics evaluate_ranking(std::span<const double> embeddings, std::size_t num_users, std::size_t num_items,
                         std::size_t cols, const CsrMatrix& target, std::span<const CsrMatrix* const> exclude,
                         std::size_t k) {
  const auto users = evaluable_users(target);
  if (users.empty()) throw DataError("no evaluable users");
  const auto topk = rank_top_k(embeddings, num_users, num_items, cols, users, exclude, k);
  return {recall_at_k(topk, target), ndcg_at_k(topk, target), users.size()};
}

QuantizedTable quantize_int8(const MaskedEmbeddingTable& table) {
  QuantizedTable q{table.mask(), {}, 1.0};
  double top = 0.0;
  table.mask().bits().for_each([&](std::size_t r, std::size_t c) {
    const double v = table.at(r, c);
    if (!std::isfinite(v)) throw DataError("cannot quantize a non-finite value");
    top = std::max(top, std::abs(v));
  });
  if (top > 0.0) q.scale = top / 127.0;
  q.codes.reserve(table.mask().nnz());
  table.mask().bits().for_each([&](std::size_t r, std::size_t c) {
    const double code = std::clamp(std::round(table.at(r, c) / q.scale), -127.0, 127.0);
    q.codes.push_back(static_cast<std::int8_t>(code));
  });
  return q;
}

MaskedEmbeddingTable dequantize(const QuantizedTable& q) {
  if (q.codes.size() != q.mask.nnz()) throw DimensionError("one code per active position required");
  MaskedEmbeddingTable table(q.mask);
  auto values = table.mutable_values();
  std::size_t k = 0;
  q.mask.bits().for_each([&](std::size_t r, std::size_t c) {
    values[r * q.mask.cols() + c] = static_cast<double>(q.codes[k++]) * q.scale;
  });
  return table;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson inputs differ in length");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

CorrelationReport frequency_size_correlation(const MaskMatrix& mask, const FrequencyVector& freqs) {
  if (freqs.users.size() != mask.user_rows() || freqs.items.size() != mask.item_rows()) {
    throw DimensionError("frequency vectors do not match the mask");
  }
  CorrelationReport report;
  const auto side = [&](std::span<const std::uint32_t> f, std::size_t offset, bool is_user) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::size_t size = mask.row_nnz(offset + i);
      xs.push_back(f[i]);
      ys.push_back(static_cast<double>(size));
      report.scatter.push_back({i, is_user, f[i], size});
    }
    return pearson(xs, ys);
  };
  report.users = side(freqs.users, 0, true);
  report.items = side(freqs.items, mask.user_rows(), false);
  return report;
}

void write_scatter_csv(const std::filesystem::path& path, const CorrelationReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,type,frequency,size\n";
  for (const auto& p : report.scatter) {
    out << p.id << ',' << (p.is_user ? "user" : "item") << ',' << p.frequency << ',' << p.size << '\n';
  }
}

}  // namespace sparserec
