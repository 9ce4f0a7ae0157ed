// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparserec/errors.hpp"

namespace sparserec {

ModelKind parse_model_kind(const std::string& name) {
  if (name == "bpr-mf") return ModelKind::kBprMf;
  if (name == "lightgcn") return ModelKind::kLightGcn;
  throw ConfigError("unknown model '" + name + "' (expected bpr-mf or lightgcn)");
}

std::string to_string(ModelKind kind) { return kind == ModelKind::kBprMf ? "bpr-mf" : "lightgcn"; }

PropagationGraph PropagationGraph::from_train(const CsrMatrix& train) {
  const std::size_t m = train.rows();
  const std::size_t n = train.cols();
  const CsrMatrix by_item = train.transpose();
  PropagationGraph g;
  g.users_ = m;
  g.ptr_.assign(m + n + 1, 0);
  g.idx_.reserve(2 * train.nnz());
  g.val_.reserve(2 * train.nnz());
  for (std::size_t u = 0; u < m; ++u) {
    const double du = static_cast<double>(train.row_nnz(u));
    for (std::uint32_t i : train.row(u)) {
      g.idx_.push_back(static_cast<std::uint32_t>(m + i));
      g.val_.push_back(1.0 / std::sqrt(du * static_cast<double>(by_item.row_nnz(i))));
    }
    g.ptr_[u + 1] = g.idx_.size();
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double di = static_cast<double>(by_item.row_nnz(i));
    for (std::uint32_t u : by_item.row(i)) {
      g.idx_.push_back(u);
      g.val_.push_back(1.0 / std::sqrt(di * static_cast<double>(train.row_nnz(u))));
    }
    g.ptr_[m + i + 1] = g.idx_.size();
  }
  return g;
}

void PropagationGraph::multiply(std::span<const double> x, std::span<double> y, std::size_t cols) const {
  if (x.size() != nodes() * cols || y.size() != nodes() * cols) throw DimensionError("propagation shape mismatch");
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t a = 0; a < nodes(); ++a) {
    double* dst = y.data() + a * cols;
    for (std::size_t p = ptr_[a]; p < ptr_[a + 1]; ++p) {
      const double* src = x.data() + static_cast<std::size_t>(idx_[p]) * cols;
      const double w = val_[p];
      for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
    }
  }
}

double PropagationGraph::weight(std::size_t a, std::size_t b) const {
  const auto first = idx_.begin() + static_cast<std::ptrdiff_t>(ptr_[a]);
  const auto last = idx_.begin() + static_cast<std::ptrdiff_t>(ptr_[a + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(b));
  return (it != last && *it == b) ? val_[static_cast<std::size_t>(it - idx_.begin())] : 0.0;
}

SparseGradient::SparseGradient(ParamSet support)
    : support_(std::move(support)), offsets_(support_.rows() + 1, 0) {
  for (std::size_t r = 0; r < support_.rows(); ++r) offsets_[r + 1] = offsets_[r] + support_.row_count(r);
  values_.assign(offsets_.back(), 0.0);
}

double SparseGradient::at(std::size_t row, std::size_t col) const {
  if (!support_.test(row, col)) return 0.0;
  const auto words = support_.row_words(row);
  std::size_t rank = 0;
  const std::size_t word = col / ParamSet::kWordBits;
  for (std::size_t k = 0; k < word; ++k) rank += static_cast<std::size_t>(std::popcount(words[k]));
  const ParamSet::Word below = (ParamSet::Word{1} << (col % ParamSet::kWordBits)) - 1;
  rank += static_cast<std::size_t>(std::popcount(words[word] & below));
  return values_[offsets_[row] + rank];
}

namespace {

double softplus_neg(double x) {
  // -ln sigma(x) = ln(1 + e^{-x})
  return std::log1p(std::exp(-std::abs(x))) + std::max(-x, 0.0);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

void check_ids(const MaskedEmbeddingTable& table, std::span<const BprTriplet> triplets) {
  for (const auto& t : triplets) {
    if (t.user >= table.user_rows() || t.pos >= table.item_rows() || t.neg >= table.item_rows()) {
      throw IndexError("triplet (" + std::to_string(t.user) + ", " + std::to_string(t.pos) + ", " +
                       std::to_string(t.neg) + ") out of range");
    }
  }
}

// Touched-row gradient buffer: dense rows only for rows that received mass.
class RowGradients {
 public:
  RowGradients(std::size_t rows, std::size_t cols) : cols_(cols), slot_(rows, -1) {}

  void touch(std::size_t r) {
    if (slot_[r] < 0) {
      slot_[r] = static_cast<std::int64_t>(touched_.size());
      touched_.push_back(r);
      buf_.resize(buf_.size() + cols_, 0.0);
    }
  }
  // Pointers stay valid until the next touch().
  double* row(std::size_t r) {
    touch(r);
    return buf_.data() + static_cast<std::size_t>(slot_[r]) * cols_;
  }
  [[nodiscard]] const double* find(std::size_t r) const {
    return slot_[r] < 0 ? nullptr : buf_.data() + static_cast<std::size_t>(slot_[r]) * cols_;
  }

 private:
  std::size_t cols_;
  std::vector<std::int64_t> slot_;
  std::vector<std::size_t> touched_;
  std::vector<double> buf_;
};

}  // namespace

double bpr_loss(std::span<const double> pos, std::span<const double> neg, const MaskedEmbeddingTable& table,
                double l2_weight) {
  if (pos.size() != neg.size()) throw DimensionError("positive and negative score counts differ");
  double bpr = 0.0;
  for (std::size_t b = 0; b < pos.size(); ++b) bpr += softplus_neg(pos[b] - neg[b]);
  if (!pos.empty()) bpr /= static_cast<double>(pos.size());
  double reg = 0.0;
  if (l2_weight != 0.0) {
    for (double v : table.values()) reg += v * v;
  }
  return bpr + l2_weight * reg;
}

Recommender::Recommender(RecommenderConfig cfg, const PropagationGraph* graph) : cfg_(cfg), graph_(graph) {
  if (cfg_.l2_weight < 0.0) throw ConfigError("l2 weight must be nonnegative");
  if (cfg_.model == ModelKind::kLightGcn) {
    if (graph_ == nullptr) throw ConfigError("lightgcn needs a propagation graph");
    if (cfg_.layers < 1) throw ConfigError("lightgcn needs at least one layer");
  }
}

std::vector<double> layer_mean_embeddings(const PropagationGraph& graph, std::span<const double> values,
                                          std::size_t cols, std::size_t layers) {
  if (values.size() != graph.nodes() * cols) throw DimensionError("table does not match propagation graph");
  std::vector<double> out(values.begin(), values.end());
  std::vector<double> layer(values.begin(), values.end());
  std::vector<double> next(values.size());
  for (std::size_t k = 0; k < layers; ++k) {
    graph.multiply(layer, next, cols);
    layer.swap(next);
    for (std::size_t q = 0; q < out.size(); ++q) out[q] += layer[q];
  }
  const double inv = 1.0 / static_cast<double>(layers + 1);
  for (double& v : out) v *= inv;
  return out;
}

std::vector<double> Recommender::final_embeddings(std::span<const double> values, std::size_t cols) const {
  if (cfg_.model == ModelKind::kBprMf) return {values.begin(), values.end()};
  return layer_mean_embeddings(*graph_, values, cols, cfg_.layers);
}

ForwardCache Recommender::forward(const MaskedEmbeddingTable& table, std::span<const BprTriplet> triplets) const {
  check_ids(table, triplets);
  ForwardCache cache;
  cache.table_version = table.version();
  cache.triplets.assign(triplets.begin(), triplets.end());
  if (cfg_.model == ModelKind::kLightGcn) cache.final_embeddings = final_embeddings(table.values(), table.cols());
  const std::size_t s = table.cols();
  const std::size_t m = table.user_rows();
  const double* emb = cfg_.model == ModelKind::kLightGcn ? cache.final_embeddings.data() : table.values().data();
  cache.pos_scores.reserve(triplets.size());
  cache.neg_scores.reserve(triplets.size());
  for (const auto& t : triplets) {
    const double* eu = emb + static_cast<std::size_t>(t.user) * s;
    cache.pos_scores.push_back(dot(eu, emb + (m + t.pos) * s, s));
    cache.neg_scores.push_back(dot(eu, emb + (m + t.neg) * s, s));
  }
  return cache;
}

double Recommender::loss(const ForwardCache& cache, const MaskedEmbeddingTable& table) const {
  return bpr_loss(cache.pos_scores, cache.neg_scores, table, cfg_.l2_weight);
}

SparseGradient Recommender::backward(const ForwardCache& cache, const MaskedEmbeddingTable& table,
                                     const ParamSet& sampled) const {
  if (cache.table_version != table.version()) throw ContractError("forward cache is stale");
  if (!sampled.same_shape(table.mask().bits())) throw DimensionError("sampled set shape mismatch");
  const std::size_t s = table.cols();
  const std::size_t m = table.user_rows();
  const std::size_t rows = table.rows();
  const bool gcn = cfg_.model == ModelKind::kLightGcn;
  const double* emb = gcn ? cache.final_embeddings.data() : table.values().data();
  const double batch = static_cast<double>(std::max<std::size_t>(cache.triplets.size(), 1));

  // dL/dF for the scored rows.
  RowGradients d_final(rows, s);
  for (std::size_t b = 0; b < cache.triplets.size(); ++b) {
    const auto& t = cache.triplets[b];
    const double g = -sigmoid(cache.neg_scores[b] - cache.pos_scores[b]) / batch;
    const std::size_t ru = t.user;
    const std::size_t ri = m + t.pos;
    const std::size_t rj = m + t.neg;
    d_final.touch(ru);
    d_final.touch(ri);
    d_final.touch(rj);
    double* du = d_final.row(ru);
    double* di = d_final.row(ri);
    double* dj = d_final.row(rj);
    const double* eu = emb + ru * s;
    const double* ei = emb + ri * s;
    const double* ej = emb + rj * s;
    for (std::size_t c = 0; c < s; ++c) {
      du[c] += g * (ei[c] - ej[c]);
      di[c] += g * eu[c];
      dj[c] -= g * eu[c];
    }
  }

  // LightGCN: dL/dW = (1/(K+1)) sum_k (A^T)^k dF with A symmetric.
  std::vector<double> dense;
  if (gcn) {
    std::vector<double> layer(rows * s, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (const double* src = d_final.find(r)) std::copy(src, src + s, layer.begin() + static_cast<std::ptrdiff_t>(r * s));
    }
    dense = layer;
    std::vector<double> next(rows * s);
    for (std::size_t k = 0; k < cfg_.layers; ++k) {
      graph_->multiply(layer, next, s);
      layer.swap(next);
      for (std::size_t q = 0; q < dense.size(); ++q) dense[q] += layer[q];
    }
    const double inv = 1.0 / static_cast<double>(cfg_.layers + 1);
    for (double& v : dense) v *= inv;
  }

  SparseGradient grad(table.mask().bits() | sampled);
  const auto values = table.values();
  const double two_l2 = 2.0 * cfg_.l2_weight;
  for (std::size_t r = 0; r < rows; ++r) {
    auto out = grad.row_values(r);
    if (out.empty()) continue;
    const double* src = gcn ? dense.data() + r * s : d_final.find(r);
    const double* w = values.data() + r * s;
    std::size_t k = 0;
    grad.support().for_each_in_row(r, [&](std::size_t, std::size_t c) {
      out[k++] = (src != nullptr ? src[c] : 0.0) + two_l2 * w[c];
    });
  }
  return grad;
}

AdamOptimizer::AdamOptimizer(std::size_t rows, std::size_t cols, AdamConfig cfg)
    : cfg_(cfg), cols_(cols), m_(rows * cols, 0.0), v_(rows * cols, 0.0) {}

void AdamOptimizer::step(MaskedEmbeddingTable& table, const SparseGradient& grad, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (table.cols() != cols_ || table.rows() * cols_ != m_.size()) throw DimensionError("optimizer/table shape mismatch");
  if (!grad.support().same_shape(table.mask().bits())) throw DimensionError("gradient/table shape mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto& active = table.mask().bits();
  auto values = table.mutable_values();
  grad.for_each([&](std::size_t r, std::size_t c, double g) {
    if (!active.test(r, c)) return;  // sampled-but-inactive: accumulator only
    const std::size_t q = r * cols_ + c;
    g += cfg_.weight_decay * values[q];
    m_[q] = cfg_.beta1 * m_[q] + (1.0 - cfg_.beta1) * g;
    v_[q] = cfg_.beta2 * v_[q] + (1.0 - cfg_.beta2) * g * g;
    values[q] -= lr * (m_[q] / bc1) / (std::sqrt(v_[q] / bc2) + cfg_.epsilon);
  });
  apply_mask(table);
}

void AdamOptimizer::reset(const ParamSet& positions) {
  positions.for_each([&](std::size_t r, std::size_t c) {
    m_[r * cols_ + c] = 0.0;
    v_[r * cols_ + c] = 0.0;
  });
}

void adam_step(MaskedEmbeddingTable& table, const SparseGradient& grad, AdamOptimizer& opt, double lr) {
  opt.step(table, grad, lr);
}

}  // namespace sparserec
