// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sparserec/data.hpp"
#include "sparserec/dst.hpp"
#include "sparserec/eval.hpp"
#include "sparserec/recommender.hpp"

namespace sparserec {

enum class MaskInit { kNmf, kUniform };
MaskInit parse_mask_init(const std::string& name);
std::string to_string(MaskInit init);

/// How the L2 term enters training: as Adam's coupled weight decay, or as
/// the explicit penalty inside the loss (and hence inside the gradients).
enum class L2Mode { kDecay, kPenalty };

struct TrainConfig {
  // data
  /// Interaction file; empty means the built-in synthetic generator.
  std::filesystem::path data;
  SynthConfig synth;
  std::uint64_t split_seed = 2024;
  std::filesystem::path cache_splits;

  // model
  ModelKind model = ModelKind::kBprMf;
  std::size_t layers = 3;
  std::size_t dim = 128;
  double init_std = 0.1;
  double l2 = 1e-4;
  L2Mode l2_mode = L2Mode::kDecay;

  // optimisation
  std::size_t epochs = 500;
  std::size_t batch_size = 8000;
  double lr = 0.01;
  double lr_decay = 0.995;
  double lr_min = 0.0005;
  std::size_t early_stop_start = 300;
  std::size_t eval_every = 5;
  std::size_t patience = 5;
  std::size_t top_k = 20;

  // sparsity
  double density = 0.125;
  double rho0 = 0.5;
  std::size_t delta_t_epochs = 1;
  /// Overrides delta_t_epochs when nonzero.
  std::size_t delta_t_steps = 0;
  std::string omega = "h/4";
  RegrowMode regrow = RegrowMode::kCumulative;
  MaskInit init = MaskInit::kNmf;
  std::size_t nmf_iters = 200;
  double nmf_l1 = 0.1;
  double nmf_tol = 1e-4;

  std::uint64_t seed = 1;
  bool check_invariants = true;

  /// Output directory; nothing is written when empty.
  std::filesystem::path out_dir;
};

/// Throws ConfigError on any out-of-range field; warns when omega exceeds the
/// memory-saving limit.
void validate(const TrainConfig& cfg);

/// max(lr * decay^epoch, lr_min) for zero-based `epoch`.
double learning_rate_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct MetricRow {
  std::size_t epoch = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  double density = 0.0;
  std::size_t params_peak = 0;
};

struct RunReport {
  std::vector<MetricRow> metrics;
  std::vector<ExplorationEvent> explorations;
  MemoryReport peak;
  std::size_t steps = 0;
  std::size_t steps_per_epoch = 0;
  std::size_t exploration_interval = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  std::size_t best_epoch = 0;
  /// Post-quantization metrics of the best checkpoint.
  Metrics valid;
  Metrics test;
  double final_density = 0.0;
  std::size_t target_active = 0;
  /// Active count straight after mask initialization.
  std::size_t initial_active = 0;
  std::size_t support_violations = 0;
  std::size_t mask_violations = 0;
  /// Explorations whose post-count missed the target without a logged shortfall.
  std::size_t density_violations = 0;
  CorrelationReport correlation;
  double omega = 0.0;
  std::filesystem::path checkpoint;
  MaskedEmbeddingTable final_table;
};

/// Loads (or synthesizes) and splits the data named by `cfg`.
InteractionDataset load_dataset(const TrainConfig& cfg);

RunReport train(const TrainConfig& cfg);
RunReport train(const TrainConfig& cfg, const InteractionDataset& data);

/// Evaluates a saved table on the test split (train and valid excluded).
Metrics evaluate_checkpoint(const TrainConfig& cfg, const InteractionDataset& data, const MaskedEmbeddingTable& table);

enum class AblationAxis { kInit, kRegrow, kOmega, kDeltaT };
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  RunReport report;
};

/// init / regrow: the 2x2 {nmf, uniform} x {cumulative, instantaneous} grid.
/// omega: {h, h/2, h/4, h/8, h/16}. delta-t: {1, 3, 5, 7, 9} epochs of steps.
/// Each variant runs once per seed in [cfg.seed, cfg.seed + seeds).
std::vector<AblationRun> ablate(const TrainConfig& cfg, AblationAxis axis, std::size_t seeds);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
void write_exploration_log(const std::filesystem::path& path, const std::vector<ExplorationEvent>& events);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRun>& runs);

}  // namespace sparserec
