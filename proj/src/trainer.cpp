// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sparserec/checkpoint.hpp"
#include "sparserec/errors.hpp"
#include "sparserec/nmf.hpp"

namespace sparserec {

MaskInit parse_mask_init(const std::string& name) {
  if (name == "nmf") return MaskInit::kNmf;
  if (name == "uniform") return MaskInit::kUniform;
  throw ConfigError("unknown init '" + name + "' (expected nmf or uniform)");
}

std::string to_string(MaskInit init) { return init == MaskInit::kNmf ? "nmf" : "uniform"; }

AblationAxis parse_ablation_axis(const std::string& name) {
  if (name == "init") return AblationAxis::kInit;
  if (name == "regrow") return AblationAxis::kRegrow;
  if (name == "omega") return AblationAxis::kOmega;
  if (name == "delta-t") return AblationAxis::kDeltaT;
  throw ConfigError("unknown ablation axis '" + name + "' (expected init, regrow, omega or delta-t)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (cfg.dim < 1) throw ConfigError("embedding size must be at least 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) throw ConfigError("lr decay must lie in (0, 1]");
  if (!(cfg.lr_min > 0.0 && cfg.lr_min <= cfg.lr)) throw ConfigError("lr_min must lie in (0, lr]");
  if (!(cfg.density > 0.0 && cfg.density <= 1.0)) throw ConfigError("density must lie in (0, 1]");
  if (!(cfg.rho0 >= 0.0 && cfg.rho0 < 1.0)) throw ConfigError("rho0 must lie in [0, 1)");
  if (cfg.l2 < 0.0) throw ConfigError("l2 must be nonnegative");
  if (cfg.model == ModelKind::kLightGcn && cfg.layers < 1) throw ConfigError("lightgcn needs at least one layer");
  if (cfg.eval_every < 1) throw ConfigError("eval-every must be at least 1");
  if (cfg.delta_t_epochs < 1 && cfg.delta_t_steps == 0) throw ConfigError("exploration interval must be positive");
  if (cfg.density == 1.0) return;
  const double omega = parse_omega(cfg.omega, cfg.density);
  if (!(omega > 0.0 && omega <= 1.0)) throw ConfigError("omega must lie in (0, 1]");
  if (omega > omega_upper_bound(cfg.density) + 1e-15) {
    spdlog::warn("omega {} exceeds (1 - d) / 2 = {}; peak memory may exceed a dense-gradient trainer", omega,
                 omega_upper_bound(cfg.density));
  }
}

double learning_rate_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return std::max(cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch)), cfg.lr_min);
}

namespace {

Rng stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return Rng(seq);
}

enum StreamId : std::uint32_t { kInitStream = 1, kNmfStream, kTripletStream, kSampleStream, kMaskStream };

MaskMatrix initial_mask(const TrainConfig& cfg, const InteractionDataset& data, std::size_t target,
                        std::size_t& deficit) {
  deficit = 0;
  const std::size_t m = data.num_users;
  const std::size_t n = data.num_items;
  if (target == (m + n) * cfg.dim) {
    MaskMatrix full(m, n, cfg.dim);
    ParamSet all(m + n, cfg.dim);
    all.fill();
    full.assign(all);
    return full;
  }
  if (cfg.init == MaskInit::kUniform) {
    Rng rng = stream(cfg.seed, kMaskStream);
    return uniform_random_mask(m, n, cfg.dim, target, rng);
  }
  NmfConfig nmf;
  nmf.rank = cfg.dim;
  nmf.max_outer_iters = cfg.nmf_iters;
  nmf.tolerance = cfg.nmf_tol;
  nmf.l1_penalty = cfg.nmf_l1;
  nmf.seed = stream(cfg.seed, kNmfStream)();
  const NmfFactors f = factorize(data.train, nmf);
  MaskMatrix binary = binarize_mask(f);
  spdlog::info("nmf: {} outer iterations, objective {:.6g} -> {:.6g}, binarized density {:.4f} (target {:.4f})",
               f.objective_trace.size() - 1, f.objective_trace.front(), f.objective_trace.back(), density(binary),
               cfg.density);
  DensityAdjustment adj = adjust_density(std::move(binary), f, target);
  deficit = adj.regrow_deficit;
  return std::move(adj.mask);
}

std::vector<double> eval_embeddings(const Recommender& model, const MaskedEmbeddingTable& table) {
  return model.final_embeddings(table.values(), table.cols());
}

}  // namespace

InteractionDataset load_dataset(const TrainConfig& cfg) {
  const RawInteractions raw = cfg.data.empty() ? synthesize_interactions(cfg.synth) : load_interactions(cfg.data);
  InteractionDataset data = split_dataset(raw, {}, cfg.split_seed);
  if (!cfg.cache_splits.empty()) write_split_cache(cfg.cache_splits, raw, data);
  return data;
}

RunReport train(const TrainConfig& cfg) { return train(cfg, load_dataset(cfg)); }

Metrics evaluate_checkpoint(const TrainConfig& cfg, const InteractionDataset& data, const MaskedEmbeddingTable& table) {
  if (table.user_rows() != data.num_users || table.item_rows() != data.num_items) {
    throw DimensionError("checkpoint shape does not match the dataset");
  }
  PropagationGraph graph;
  if (cfg.model == ModelKind::kLightGcn) graph = PropagationGraph::from_train(data.train);
  const Recommender model({cfg.model, cfg.layers, 0.0}, cfg.model == ModelKind::kLightGcn ? &graph : nullptr);
  const auto emb = eval_embeddings(model, table);
  const CsrMatrix* exclude[] = {&data.train, &data.valid};
  return evaluate_ranking(emb, data.num_users, data.num_items, table.cols(), data.test, exclude, cfg.top_k);
}

RunReport train(const TrainConfig& cfg, const InteractionDataset& data) {
  validate(cfg);
  const std::size_t m = data.num_users;
  const std::size_t n = data.num_items;
  const std::size_t s = cfg.dim;
  // d = 1 is the dense reference trainer: full mask, no sampling, no exploration.
  const bool dense = cfg.density == 1.0;
  const double omega = dense ? 0.0 : parse_omega(cfg.omega, cfg.density);

  RunReport report;
  report.omega = omega;
  report.steps_per_epoch = (data.train.nnz() + cfg.batch_size - 1) / cfg.batch_size;
  report.exploration_interval = cfg.delta_t_steps > 0 ? cfg.delta_t_steps : cfg.delta_t_epochs * report.steps_per_epoch;
  const std::size_t total_steps = cfg.epochs * report.steps_per_epoch;
  const std::size_t target = target_active_count(cfg.density, m + n, s);
  report.target_active = target;

  std::size_t deficit = 0;
  MaskedEmbeddingTable table(initial_mask(cfg, data, target, deficit));
  report.initial_active = table.mask().nnz();
  {
    Rng rng = stream(cfg.seed, kInitStream);
    std::normal_distribution<double> normal(0.0, cfg.init_std);
    for (double& v : table.mutable_values()) v = normal(rng);
    apply_mask(table);
  }
  if (deficit > 0) spdlog::info("mask init: {} positions short of target, filled at the first exploration", deficit);

  PropagationGraph graph;
  if (cfg.model == ModelKind::kLightGcn) graph = PropagationGraph::from_train(data.train);
  const double penalty = cfg.l2_mode == L2Mode::kPenalty ? cfg.l2 : 0.0;
  const Recommender model({cfg.model, cfg.layers, penalty}, cfg.model == ModelKind::kLightGcn ? &graph : nullptr);
  AdamConfig adam;
  adam.weight_decay = cfg.l2_mode == L2Mode::kDecay ? cfg.l2 : 0.0;
  AdamOptimizer optimizer(m + n, s, adam);

  const FrequencyVector freqs = compute_frequencies(data.train);
  const TripletSampler sampler(data.train);
  Rng triplet_rng = stream(cfg.seed, kTripletStream);
  Rng sample_rng = stream(cfg.seed, kSampleStream);

  ExplorationConfig explore{cfg.density, cfg.rho0, omega, total_steps};
  ExplorationState state(m, n, s, cfg.regrow);
  if (!dense) state.resample(sample_vectors(freqs, omega, sample_rng));
  state.set_rho(cfg.rho0);

  std::size_t peak_total = 0;
  double best_recall = -1.0;
  std::size_t bad_evals = 0;
  MaskedEmbeddingTable best = table;
  const CsrMatrix* valid_exclude[] = {&data.train};

  std::size_t t = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = learning_rate_at_epoch(cfg, epoch - 1);
    for (std::size_t b = 0; b < report.steps_per_epoch; ++b) {
      ++t;
      const auto triplets = sampler.sample(cfg.batch_size, triplet_rng);
      const ForwardCache cache = model.forward(table, triplets);
      const SparseGradient grad = model.backward(cache, table, state.sampled_rows());
      if (cfg.check_invariants && !grad.support().is_subset_of(table.mask().bits() | state.sampled_rows())) {
        ++report.support_violations;
      }
      accumulate_gradients(state, grad);

      const std::size_t total = table.mask().nnz() + grad.nnz() + state.accumulator_size();
      if (total >= peak_total) {
        peak_total = total;
        report.peak = memory_accounting(cfg.density, omega, m, n, s, table.mask().nnz(), grad.nnz(),
                                        state.accumulator_size());
      }

      optimizer.step(table, grad, lr);

      if (!dense && t % report.exploration_interval == 0) {
        ExplorationResult res = run_exploration(table, state, freqs, t, explore, sample_rng);
        optimizer.reset(res.pruned | res.grown);
        if (res.event.nnz_after != target && res.event.shortfall == 0) ++report.density_violations;
        if (cfg.check_invariants && table.mask().nnz() != table.mask().recount()) ++report.density_violations;
        report.explorations.push_back(res.event);
      } else {
        state.set_rho(cosine_pruning_rate(static_cast<double>(t), cfg.rho0, static_cast<double>(total_steps)));
      }
      if (cfg.check_invariants && table.inconsistent_positions() != 0) ++report.mask_violations;
    }
    report.epochs_run = epoch;

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      const auto emb = eval_embeddings(model, table);
      const Metrics v = evaluate_ranking(emb, m, n, s, data.valid, valid_exclude, cfg.top_k);
      report.metrics.push_back({epoch, v.recall, v.ndcg, density(table.mask()), peak_total});
      if (v.recall > best_recall) {
        best_recall = v.recall;
        report.best_epoch = epoch;
        best = table;
        bad_evals = 0;
      } else if (epoch >= cfg.early_stop_start) {
        ++bad_evals;
      }
      if (epoch >= cfg.early_stop_start && bad_evals >= cfg.patience) {
        report.early_stopped = true;
        break;
      }
    }
  }
  report.steps = t;

  const QuantizedTable quantized = quantize_int8(best);
  report.final_table = dequantize(quantized);
  report.final_density = density(report.final_table.mask());
  {
    const auto emb = eval_embeddings(model, report.final_table);
    report.valid = evaluate_ranking(emb, m, n, s, data.valid, valid_exclude, cfg.top_k);
    const CsrMatrix* test_exclude[] = {&data.train, &data.valid};
    report.test = evaluate_ranking(emb, m, n, s, data.test, test_exclude, cfg.top_k);
  }
  report.correlation = frequency_size_correlation(report.final_table.mask(), freqs);

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_metrics_csv(cfg.out_dir / "metrics.csv", report.metrics);
    write_exploration_log(cfg.out_dir / "explorations.jsonl", report.explorations);
    write_scatter_csv(cfg.out_dir / "correlation.csv", report.correlation);
    report.checkpoint = cfg.out_dir / "checkpoint.srck";
    std::ofstream out(report.checkpoint, std::ios::binary);
    if (!out) throw DataError("cannot write " + report.checkpoint.string());
    write_checkpoint_int8(out, quantized.mask, quantized.codes, quantized.scale, cfg.density);
  }
  return report;
}

std::vector<AblationRun> ablate(const TrainConfig& cfg, AblationAxis axis, std::size_t seeds) {
  if (seeds < 1) throw ConfigError("ablation needs at least one seed");
  struct Variant {
    std::string name;
    TrainConfig cfg;
  };
  std::vector<Variant> variants;
  switch (axis) {
    case AblationAxis::kInit:
    case AblationAxis::kRegrow:
      for (MaskInit init : {MaskInit::kNmf, MaskInit::kUniform}) {
        for (RegrowMode mode : {RegrowMode::kCumulative, RegrowMode::kInstantaneous}) {
          TrainConfig c = cfg;
          c.init = init;
          c.regrow = mode;
          variants.push_back({to_string(init) + "+" + to_string(mode), c});
        }
      }
      break;
    case AblationAxis::kOmega:
      for (const char* w : {"h", "h/2", "h/4", "h/8", "h/16"}) {
        TrainConfig c = cfg;
        c.omega = w;
        variants.push_back({std::string("omega=") + w, c});
      }
      break;
    case AblationAxis::kDeltaT:
      for (std::size_t k : {1, 3, 5, 7, 9}) {
        TrainConfig c = cfg;
        c.delta_t_epochs = k;
        c.delta_t_steps = 0;
        variants.push_back({"delta_t=" + std::to_string(k), c});
      }
      break;
  }

  const InteractionDataset data = load_dataset(cfg);
  std::vector<AblationRun> runs;
  for (const auto& v : variants) {
    for (std::size_t k = 0; k < seeds; ++k) {
      TrainConfig c = v.cfg;
      c.seed = cfg.seed + k;
      c.cache_splits.clear();
      if (!cfg.out_dir.empty()) {
        std::string dir = v.name;
        std::replace(dir.begin(), dir.end(), '/', '_');
        c.out_dir = cfg.out_dir / fmt::format("{}_seed{}", dir, c.seed);
      }
      spdlog::info("ablation: {} seed {}", v.name, c.seed);
      runs.push_back({v.name, c.seed, train(c, data)});
    }
  }
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_ablation_csv(cfg.out_dir / "ablation.csv", runs);
  }
  return runs;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,recall@20,ndcg@20,density,params_peak\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{:.10f},{:.10f},{:.10f},{}\n", r.epoch, r.recall, r.ndcg, r.density, r.params_peak);
  }
}

void write_exploration_log(const std::filesystem::path& path, const std::vector<ExplorationEvent>& events) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : events) out << to_json_line(e) << '\n';
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRun>& runs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "variant,seed,valid_recall@20,valid_ndcg@20,test_recall@20,test_ndcg@20,params_peak,final_density\n";
  for (const auto& r : runs) {
    out << fmt::format("{},{},{:.10f},{:.10f},{:.10f},{:.10f},{},{:.10f}\n", r.variant, r.seed, r.report.valid.recall,
                       r.report.valid.ndcg, r.report.test.recall, r.report.test.ndcg, r.report.peak.total,
                       r.report.final_density);
  }
}

}  // namespace sparserec
