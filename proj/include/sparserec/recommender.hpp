// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparserec/data.hpp"
#include "sparserec/masked_embedding.hpp"

namespace sparserec {

enum class ModelKind { kBprMf, kLightGcn };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

struct RecommenderConfig {
  ModelKind model = ModelKind::kBprMf;
  /// Propagation depth K; LightGCN only.
  std::size_t layers = 3;
  /// Coefficient of the explicit ||E * M||^2 term in the loss.
  double l2_weight = 0.0;
};

/// Symmetrically normalized bipartite adjacency over the stacked
/// [users; items] nodes: A_uv = 1 / sqrt(deg(u) deg(v)) for each train edge.
class PropagationGraph {
 public:
  PropagationGraph() = default;
  static PropagationGraph from_train(const CsrMatrix& train);

  [[nodiscard]] std::size_t nodes() const { return ptr_.size() - 1; }
  [[nodiscard]] std::size_t user_nodes() const { return users_; }
  [[nodiscard]] std::size_t edges() const { return idx_.size(); }

  /// y = A x for row-major (nodes x cols) matrices.
  void multiply(std::span<const double> x, std::span<double> y, std::size_t cols) const;
  [[nodiscard]] double weight(std::size_t a, std::size_t b) const;

 private:
  std::size_t users_ = 0;
  std::vector<std::size_t> ptr_{0};
  std::vector<std::uint32_t> idx_;
  std::vector<double> val_;
};

/// (1/(K+1)) sum_{k=0..K} A^k X for row-major X; K = 0 returns X.
std::vector<double> layer_mean_embeddings(const PropagationGraph& graph, std::span<const double> values,
                                          std::size_t cols, std::size_t layers);

/// Gradient values stored only on an explicit support pattern.
///
/// Values are packed row-major over the support, so memory is one double per
/// supported position.
class SparseGradient {
 public:
  SparseGradient() = default;
  explicit SparseGradient(ParamSet support);

  [[nodiscard]] const ParamSet& support() const { return support_; }
  [[nodiscard]] std::size_t nnz() const { return values_.size(); }
  [[nodiscard]] double at(std::size_t row, std::size_t col) const;

  /// Packed values for `row`, in increasing column order of its support.
  [[nodiscard]] std::span<const double> row_values(std::size_t row) const {
    return {values_.data() + offsets_[row], offsets_[row + 1] - offsets_[row]};
  }
  [[nodiscard]] std::span<double> row_values(std::size_t row) {
    return {values_.data() + offsets_[row], offsets_[row + 1] - offsets_[row]};
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t r = 0; r + 1 < offsets_.size(); ++r) {
      std::size_t k = offsets_[r];
      support_.for_each_in_row(r, [&](std::size_t row, std::size_t col) { fn(row, col, values_[k++]); });
    }
  }

 private:
  ParamSet support_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

/// Scores for one batch plus what the backward pass needs.
struct ForwardCache {
  std::uint64_t table_version = 0;
  std::vector<BprTriplet> triplets;
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
  /// Layer-mean embeddings (rows x s); LightGCN only.
  std::vector<double> final_embeddings;
};

/// Mean BPR loss plus l2 * ||E * M||_F^2, with a log1p-stable softplus.
double bpr_loss(std::span<const double> pos, std::span<const double> neg, const MaskedEmbeddingTable& table,
                double l2_weight);

/// BPR-MF and LightGCN scoring over a masked table with hand-derived
/// gradients. LightGCN requires a propagation graph that outlives the model.
class Recommender {
 public:
  explicit Recommender(RecommenderConfig cfg, const PropagationGraph* graph = nullptr);

  [[nodiscard]] const RecommenderConfig& config() const { return cfg_; }

  [[nodiscard]] ForwardCache forward(const MaskedEmbeddingTable& table, std::span<const BprTriplet> triplets) const;
  [[nodiscard]] double loss(const ForwardCache& cache, const MaskedEmbeddingTable& table) const;

  /// Gradient of the loss w.r.t. the effective table E * M, kept on
  /// active ∪ sampled and absent elsewhere.
  [[nodiscard]] SparseGradient backward(const ForwardCache& cache, const MaskedEmbeddingTable& table,
                                        const ParamSet& sampled) const;

  /// Embeddings used for ranking: the table itself for BPR-MF, the layer
  /// mean for LightGCN.
  [[nodiscard]] std::vector<double> final_embeddings(std::span<const double> values, std::size_t cols) const;

 private:
  RecommenderConfig cfg_;
  const PropagationGraph* graph_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Coupled weight decay: g <- g + wd * theta.
  double weight_decay = 0.0;
};

/// Adam restricted to a gradient's support. Moments are stored densely; only
/// supported, active positions are read or written.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::size_t rows, std::size_t cols, AdamConfig cfg = {});

  /// Updates supported active positions, then re-applies the mask.
  void step(MaskedEmbeddingTable& table, const SparseGradient& grad, double lr);
  /// Zeroes both moments at `positions` (pruned or regrown parameters).
  void reset(const ParamSet& positions);

  [[nodiscard]] std::span<const double> first_moment() const { return m_; }
  [[nodiscard]] std::span<const double> second_moment() const { return v_; }
  [[nodiscard]] std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t cols_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

void adam_step(MaskedEmbeddingTable& table, const SparseGradient& grad, AdamOptimizer& opt, double lr);

}  // namespace sparserec
