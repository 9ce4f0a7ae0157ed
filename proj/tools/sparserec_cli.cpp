// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0
//
// sparserec train | ablate | eval | synth

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sparserec/checkpoint.hpp"
#include "sparserec/errors.hpp"
#include "sparserec/trainer.hpp"

namespace {

using namespace sparserec;

struct Flags {
  TrainConfig cfg;
  std::string model = "bpr-mf";
  std::string regrow = "cumulative";
  std::string init = "nmf";
  std::string l2_mode = "decay";
  std::string data;
  std::string cache_splits;
  std::string out_dir;
};

void add_data_flags(CLI::App& app, Flags& f) {
  app.add_option("--data", f.data, "interaction file (user item per line); synthetic when omitted");
  app.add_option("--split-seed", f.cfg.split_seed);
  app.add_option("--cache-splits", f.cache_splits, "write the split with a tag column");
  app.add_option("--synth-users", f.cfg.synth.users);
  app.add_option("--synth-items", f.cfg.synth.items);
  app.add_option("--synth-interactions", f.cfg.synth.interactions);
  app.add_option("--synth-seed", f.cfg.synth.seed);
  app.add_option("--synth-min-per-user", f.cfg.synth.min_per_user);
  app.add_option("--model", f.model)->check(CLI::IsMember({"bpr-mf", "lightgcn"}));
  app.add_option("--layers", f.cfg.layers);
  app.add_option("--dim", f.cfg.dim, "embedding size s");
  app.add_option("--top-k", f.cfg.top_k);
}

void add_train_flags(CLI::App& app, Flags& f) {
  add_data_flags(app, f);
  app.add_option("--nmf-iters", f.cfg.nmf_iters);
  app.add_option("--nmf-l1", f.cfg.nmf_l1);
  app.add_option("--nmf-tol", f.cfg.nmf_tol);
  app.add_option("--init", f.init)->check(CLI::IsMember({"nmf", "uniform"}));
  app.add_option("--init-std", f.cfg.init_std);
  app.add_option("--lr", f.cfg.lr);
  app.add_option("--lr-decay", f.cfg.lr_decay);
  app.add_option("--lr-min", f.cfg.lr_min);
  app.add_option("--l2", f.cfg.l2);
  app.add_option("--l2-mode", f.l2_mode)->check(CLI::IsMember({"decay", "penalty"}));
  app.add_option("--density", f.cfg.density);
  app.add_option("--rho0", f.cfg.rho0);
  app.add_option("--delta-t-epochs", f.cfg.delta_t_epochs);
  app.add_option("--delta-t-steps", f.cfg.delta_t_steps, "overrides --delta-t-epochs when nonzero");
  app.add_option("--omega", f.cfg.omega, "literal, or h, h/2, h/4, h/8, h/16 with h = (1 - d) / 2");
  app.add_option("--regrow", f.regrow)->check(CLI::IsMember({"cumulative", "instantaneous"}));
  app.add_option("--epochs", f.cfg.epochs);
  app.add_option("--batch", f.cfg.batch_size);
  app.add_option("--early-stop-start", f.cfg.early_stop_start);
  app.add_option("--eval-every", f.cfg.eval_every);
  app.add_option("--patience", f.cfg.patience);
  app.add_option("--seed", f.cfg.seed);
  app.add_option("--check-invariants", f.cfg.check_invariants);
  app.add_option("--out-dir", f.out_dir);
}

TrainConfig resolve(Flags& f) {
  TrainConfig cfg = f.cfg;
  cfg.model = parse_model_kind(f.model);
  cfg.regrow = parse_regrow_mode(f.regrow);
  cfg.init = parse_mask_init(f.init);
  cfg.l2_mode = f.l2_mode == "penalty" ? L2Mode::kPenalty : L2Mode::kDecay;
  cfg.data = f.data;
  cfg.cache_splits = f.cache_splits;
  cfg.out_dir = f.out_dir;
  return cfg;
}

// Splices a flat key=value file in as "--key value" right after the
// subcommand, so later command-line flags take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  const auto trim = [](std::string v) {
    const auto b = v.find_first_not_of(" \t\r");
    const auto e = v.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
  };
  std::vector<std::string> extra;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(no) + ": expected key=value");
    extra.push_back("--" + trim(line.substr(0, eq)));
    extra.push_back(trim(line.substr(eq + 1)));
  }
  const auto sub = std::find_if(args.begin(), args.end(),
                                [](const std::string& a) { return a == "train" || a == "ablate" || a == "eval"; });
  args.insert(sub == args.end() ? sub : sub + 1, extra.begin(), extra.end());
  return args;
}

std::string format_r(const std::optional<double>& r) { return r ? fmt::format("{:.4f}", *r) : "n/a"; }

void print_summary(const RunReport& r) {
  fmt::print("epochs run        {}{}\n", r.epochs_run, r.early_stopped ? " (early stop)" : "");
  fmt::print("steps             {} ({} per epoch, exploration every {})\n", r.steps, r.steps_per_epoch,
             r.exploration_interval);
  fmt::print("explorations      {}\n", r.explorations.size());
  fmt::print("best epoch        {}\n", r.best_epoch);
  fmt::print("valid recall@k    {:.6f}  ndcg@k {:.6f}\n", r.valid.recall, r.valid.ndcg);
  fmt::print("test recall@k     {:.6f}  ndcg@k {:.6f}\n", r.test.recall, r.test.ndcg);
  fmt::print("density           {:.6f} ({} active, target {})\n", r.final_density, r.final_table.mask().nnz(),
             r.target_active);
  fmt::print("peak params       {} (bound {}, dense-gradient {})\n", r.peak.total, r.peak.sparse_bound,
             r.peak.dense_gradient_bound);
  fmt::print("corr freq/size    users {}  items {}\n", format_r(r.correlation.users), format_r(r.correlation.items));
  fmt::print("violations        support {}  mask {}  density {}\n", r.support_violations, r.mask_violations,
             r.density_violations);
  if (!r.checkpoint.empty()) fmt::print("checkpoint        {}\n", r.checkpoint.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic sparse training for recommender embedding tables"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string log_level = "info";
  app.add_option("--log-level", log_level)->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  std::string config_path;

  Flags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  train_cmd->add_option("--config", config_path, "flat key=value file; command-line flags override it");
  add_train_flags(*train_cmd, train_flags);

  Flags ablate_flags;
  std::string axis = "init";
  std::size_t seeds = 3;
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  ablate_cmd->add_option("--config", config_path, "flat key=value file; command-line flags override it");
  add_train_flags(*ablate_cmd, ablate_flags);
  ablate_cmd->add_option("--axis", axis)->check(CLI::IsMember({"init", "regrow", "omega", "delta-t"}));
  ablate_cmd->add_option("--seeds", seeds);

  Flags eval_flags;
  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the test split");
  eval_cmd->add_option("--config", config_path, "flat key=value file; command-line flags override it");
  add_train_flags(*eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", checkpoint)->required();

  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic interaction file");
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--users", synth.users);
  synth_cmd->add_option("--items", synth.items);
  synth_cmd->add_option("--interactions", synth.interactions);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--min-per-user", synth.min_per_user);

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (train_cmd->parsed()) {
      print_summary(train(resolve(train_flags)));
    } else if (ablate_cmd->parsed()) {
      const auto runs = ablate(resolve(ablate_flags), parse_ablation_axis(axis), seeds);
      fmt::print("{:<28} {:>6} {:>12} {:>12} {:>12}\n", "variant", "seed", "valid_recall", "test_recall", "peak");
      for (const auto& r : runs) {
        fmt::print("{:<28} {:>6} {:>12.6f} {:>12.6f} {:>12}\n", r.variant, r.seed, r.report.valid.recall,
                   r.report.test.recall, r.report.peak.total);
      }
    } else if (eval_cmd->parsed()) {
      const TrainConfig cfg = resolve(eval_flags);
      const LoadedCheckpoint ck = load_checkpoint(checkpoint);
      const Metrics m = evaluate_checkpoint(cfg, load_dataset(cfg), ck.table);
      fmt::print("test recall@{} {:.6f}  ndcg@{} {:.6f}  users {}\n", cfg.top_k, m.recall, cfg.top_k, m.ndcg, m.users);
    } else if (synth_cmd->parsed()) {
      const RawInteractions raw = synthesize_interactions(synth);
      write_interactions(synth_out, raw);
      fmt::print("{} users, {} items, {} interactions -> {}\n", raw.num_users, raw.num_items, raw.pairs.size(),
                 synth_out);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
