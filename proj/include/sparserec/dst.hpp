// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparserec/data.hpp"
#include "sparserec/masked_embedding.hpp"
#include "sparserec/recommender.hpp"

namespace sparserec {

enum class RegrowMode {
  /// Regrow by gradients summed over the whole exploration window.
  kCumulative,
  /// Regrow by the last step's gradient only.
  kInstantaneous,
};

RegrowMode parse_regrow_mode(const std::string& name);
std::string to_string(RegrowMode mode);

struct MagnitudeContributions {
  double users = 0.5;
  double items = 0.5;
};

/// Share of total absolute weight held by the user and item tables. An
/// all-zero table falls back to (m / (m + n), n / (m + n)).
MagnitudeContributions magnitude_contributions(const MaskedEmbeddingTable& table);

/// (rho0 / 2) (1 + cos(pi t / t_end)); 0 once t >= t_end.
double cosine_pruning_rate(double t, double rho0, double t_end);

struct PruneSelection {
  ParamSet users;  // positions in user rows
  ParamSet items;  // positions in item rows
  [[nodiscard]] ParamSet combined() const { return users | items; }
};

/// The round(rho * nnz(M^U)) active user positions with the smallest |value|,
/// likewise for items. Ties go to the lexicographically smaller (row, col).
PruneSelection select_prune_set(const MaskedEmbeddingTable& table, double rho);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);
/// softmax over raw frequencies.
std::vector<double> frequency_softmax(std::span<const std::uint32_t> freqs);

/// round(omega * rows).
std::size_t sample_count(double omega, std::size_t rows);

struct SampledRows {
  /// Local ids, ascending.
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
};

/// Draws round(omega m) users and round(omega n) items without replacement
/// with probabilities softmax(f^U), softmax(f^V) (successive sampling,
/// realised as Gumbel top-k on the logits).
SampledRows sample_vectors(const FrequencyVector& freqs, double omega, Rng& rng);

/// Sampled rows plus gradient accumulators over exactly those rows.
class ExplorationState {
 public:
  ExplorationState() = default;
  ExplorationState(std::size_t users, std::size_t items, std::size_t cols, RegrowMode mode);

  /// Installs a fresh sample and zeroes the accumulators.
  void resample(SampledRows rows);
  void reset_accumulators();

  [[nodiscard]] RegrowMode mode() const { return mode_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t user_rows() const { return users_; }
  [[nodiscard]] std::span<const std::size_t> sampled_users() const { return sample_.users; }
  [[nodiscard]] std::span<const std::size_t> sampled_items() const { return sample_.items; }
  /// Row-expanded sampled set over the stacked table.
  [[nodiscard]] const ParamSet& sampled_rows() const { return sampled_rows_; }

  /// Accumulator slot of a stacked row, or -1 when the row is not sampled.
  [[nodiscard]] std::int64_t slot(std::size_t stacked_row) const { return slot_[stacked_row]; }
  /// Accumulator row (length s) for a sampled stacked row.
  [[nodiscard]] std::span<const double> accumulator_row(std::size_t stacked_row) const;
  [[nodiscard]] std::span<double> accumulator_row(std::size_t stacked_row);
  /// (|S^U| + |S^V|) * s.
  [[nodiscard]] std::size_t accumulator_size() const { return accum_.size(); }
  [[nodiscard]] double max_abs_accumulator() const;

  [[nodiscard]] double rho() const { return rho_; }
  void set_rho(double rho) { rho_ = rho; }

 private:
  std::size_t users_ = 0;
  std::size_t items_ = 0;
  std::size_t cols_ = 0;
  RegrowMode mode_ = RegrowMode::kCumulative;
  SampledRows sample_;
  ParamSet sampled_rows_;
  std::vector<std::int64_t> slot_;
  // Users' slots first, then items'.
  std::vector<double> accum_;
  double rho_ = 0.0;
};

/// C += gradient restricted to the sampled rows (cumulative mode), or
/// C = that restriction (instantaneous mode).
void accumulate_gradients(ExplorationState& state, const SparseGradient& grad);

struct RegrowSelection {
  ParamSet users;
  ParamSet items;
  /// Positions that could not be placed because the candidate pools ran out.
  std::size_t shortfall = 0;
  [[nodiscard]] ParamSet combined() const { return users | items; }
};

/// Picks `grow_total` positions among sampled rows that are inactive in
/// `post_prune`, ranked by |C| (ties by (row, col)). The user side receives
/// round(mu_users * grow_total), the item side the rest; a side whose pool is
/// too small hands its remainder to the other side.
RegrowSelection select_regrow_set(const ExplorationState& state, double mu_users, std::size_t grow_total,
                                  const MaskMatrix& post_prune);

struct ExplorationConfig {
  double density = 0.25;
  double rho0 = 0.5;
  double omega = 0.1;
  /// Schedule horizon in optimizer steps.
  std::size_t total_steps = 1;
};

/// One structured record per exploration.
struct ExplorationEvent {
  std::size_t step = 0;
  double rho = 0.0;
  std::size_t prune_users = 0;
  std::size_t prune_items = 0;
  std::size_t grow_users = 0;
  std::size_t grow_items = 0;
  double mu_users = 0.0;
  std::size_t nnz_after = 0;
  std::size_t target = 0;
  double density_after = 0.0;
  std::size_t shortfall = 0;
};

/// Serialises an event as one JSON object on a single line.
std::string to_json_line(const ExplorationEvent& e);

struct ExplorationResult {
  ExplorationEvent event;
  ParamSet pruned;
  ParamSet grown;
};

/// One prune/regrow cycle at step t: mu, prune, regrow toward the exact target
/// count, mask update, zero-init of grown positions, re-mask, rho update,
/// then a fresh sample with cleared accumulators.
ExplorationResult run_exploration(MaskedEmbeddingTable& table, ExplorationState& state, const FrequencyVector& freqs,
                                  std::size_t t, const ExplorationConfig& cfg, Rng& rng);

/// (1 - d) / 2: the largest sampling ratio that still beats a dense gradient.
double omega_upper_bound(double density);

/// Parses a literal ratio or one of h, h/2, h/4, h/8, h/16 with h = (1 - d) / 2.
double parse_omega(const std::string& text, double density);

struct MemoryReport {
  std::size_t active_values = 0;
  std::size_t gradient_support = 0;
  std::size_t accumulators = 0;
  std::size_t total = 0;
  /// (2d + 2 omega) s (m + n)
  double sparse_bound = 0.0;
  /// (d + 1) s (m + n)
  double dense_gradient_bound = 0.0;
  /// 3 s (m + n)
  double threshold_table_bound = 0.0;
  bool within_bound = false;
  bool omega_within_limit = false;
};

MemoryReport memory_accounting(double density, double omega, std::size_t users, std::size_t items, std::size_t cols,
                               std::size_t active_values, std::size_t gradient_support, std::size_t accumulators);

}  // namespace sparserec
