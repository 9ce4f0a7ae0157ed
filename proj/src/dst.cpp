// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/dst.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sparserec/errors.hpp"

namespace sparserec {

RegrowMode parse_regrow_mode(const std::string& name) {
  if (name == "cumulative") return RegrowMode::kCumulative;
  if (name == "instantaneous") return RegrowMode::kInstantaneous;
  throw ConfigError("unknown regrow mode '" + name + "' (expected cumulative or instantaneous)");
}

std::string to_string(RegrowMode mode) {
  return mode == RegrowMode::kCumulative ? "cumulative" : "instantaneous";
}

MagnitudeContributions magnitude_contributions(const MaskedEmbeddingTable& table) {
  const auto values = table.values();
  const std::size_t split = table.user_rows() * table.cols();
  double users = 0.0;
  double items = 0.0;
  for (std::size_t q = 0; q < split; ++q) users += std::abs(values[q]);
  for (std::size_t q = split; q < values.size(); ++q) items += std::abs(values[q]);
  const double total = users + items;
  if (total == 0.0) {
    const double share = static_cast<double>(table.user_rows()) / static_cast<double>(table.rows());
    return {share, 1.0 - share};
  }
  return {users / total, items / total};
}

double cosine_pruning_rate(double t, double rho0, double t_end) {
  if (!(t_end > 0.0)) throw ConfigError("schedule horizon must be positive");
  if (t < 0.0) throw ConfigError("schedule step must be nonnegative");
  if (t >= t_end) return 0.0;
  return 0.5 * rho0 * (1.0 + std::cos(std::numbers::pi * t / t_end));
}

namespace {

struct Scored {
  double key;
  std::size_t row;
  std::size_t col;
};

// Orders by key ascending, then (row, col) ascending.
bool ascending(const Scored& a, const Scored& b) {
  if (a.key != b.key) return a.key < b.key;
  return a.row != b.row ? a.row < b.row : a.col < b.col;
}

// Orders by key descending, then (row, col) ascending.
bool descending(const Scored& a, const Scored& b) {
  if (a.key != b.key) return a.key > b.key;
  return a.row != b.row ? a.row < b.row : a.col < b.col;
}

template <typename Less>
void take_front(std::vector<Scored>& pool, std::size_t k, Less less, ParamSet& out) {
  if (k == 0) return;
  if (k < pool.size()) {
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k - 1), pool.end(), less);
  }
  for (std::size_t q = 0; q < std::min(k, pool.size()); ++q) out.set(pool[q].row, pool[q].col);
}

ParamSet smallest_active(const MaskedEmbeddingTable& table, std::size_t first, std::size_t last, double rho) {
  const auto& bits = table.mask().bits();
  ParamSet out(table.rows(), table.cols());
  const std::size_t active = bits.count_rows(first, last);
  const auto k = static_cast<std::size_t>(std::llround(rho * static_cast<double>(active)));
  if (k == 0) return out;
  std::vector<Scored> pool;
  pool.reserve(active);
  for (std::size_t r = first; r < last; ++r) {
    bits.for_each_in_row(r, [&](std::size_t row, std::size_t col) {
      pool.push_back({std::abs(table.at(row, col)), row, col});
    });
  }
  take_front(pool, k, ascending, out);
  return out;
}

}  // namespace

PruneSelection select_prune_set(const MaskedEmbeddingTable& table, double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("pruning rate must lie in [0, 1)");
  return {smallest_active(table, 0, table.user_rows(), rho),
          smallest_active(table, table.user_rows(), table.rows(), rho)};
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += (p[i] = std::exp(logits[i] - top));
  for (double& x : p) x /= total;
  return p;
}

std::vector<double> frequency_softmax(std::span<const std::uint32_t> freqs) {
  const std::vector<double> logits(freqs.begin(), freqs.end());
  return softmax(logits);
}

std::size_t sample_count(double omega, std::size_t rows) {
  return static_cast<std::size_t>(std::llround(omega * static_cast<double>(rows)));
}

namespace {

std::vector<std::size_t> gumbel_top_k(std::span<const std::uint32_t> logits, std::size_t k, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<std::pair<double, std::size_t>> keys(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) keys[i] = {static_cast<double>(logits[i]) - std::log(expo(rng)), i};
  const auto larger = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  if (k < keys.size()) std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(), larger);
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t q = 0; q < k; ++q) out.push_back(keys[q].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SampledRows sample_vectors(const FrequencyVector& freqs, double omega, Rng& rng) {
  if (!(omega > 0.0 && omega <= 1.0)) throw ConfigError("sampling ratio must lie in (0, 1]");
  const std::size_t ku = sample_count(omega, freqs.users.size());
  const std::size_t kv = sample_count(omega, freqs.items.size());
  if (ku == 0 || kv == 0) throw ConfigError("sampling ratio too small: omega * rows rounds to zero");
  return {gumbel_top_k(freqs.users, ku, rng), gumbel_top_k(freqs.items, kv, rng)};
}

ExplorationState::ExplorationState(std::size_t users, std::size_t items, std::size_t cols, RegrowMode mode)
    : users_(users),
      items_(items),
      cols_(cols),
      mode_(mode),
      sampled_rows_(users + items, cols),
      slot_(users + items, -1) {}

void ExplorationState::resample(SampledRows rows) {
  for (std::size_t u : sample_.users) slot_[u] = -1;
  for (std::size_t i : sample_.items) slot_[users_ + i] = -1;
  sample_ = std::move(rows);
  sampled_rows_.clear();
  std::int64_t next = 0;
  for (std::size_t u : sample_.users) {
    if (u >= users_) throw IndexError("sampled user out of range");
    slot_[u] = next++;
    sampled_rows_.set_row(u);
  }
  for (std::size_t i : sample_.items) {
    if (i >= items_) throw IndexError("sampled item out of range");
    slot_[users_ + i] = next++;
    sampled_rows_.set_row(users_ + i);
  }
  accum_.assign(static_cast<std::size_t>(next) * cols_, 0.0);
}

void ExplorationState::reset_accumulators() { std::fill(accum_.begin(), accum_.end(), 0.0); }

std::span<const double> ExplorationState::accumulator_row(std::size_t stacked_row) const {
  const auto s = slot_.at(stacked_row);
  if (s < 0) throw ContractError("row is not sampled");
  return {accum_.data() + static_cast<std::size_t>(s) * cols_, cols_};
}

std::span<double> ExplorationState::accumulator_row(std::size_t stacked_row) {
  const auto s = slot_.at(stacked_row);
  if (s < 0) throw ContractError("row is not sampled");
  return {accum_.data() + static_cast<std::size_t>(s) * cols_, cols_};
}

double ExplorationState::max_abs_accumulator() const {
  double best = 0.0;
  for (double v : accum_) best = std::max(best, std::abs(v));
  return best;
}

void accumulate_gradients(ExplorationState& state, const SparseGradient& grad) {
  if (!grad.support().same_shape(state.sampled_rows())) throw ContractError("gradient shape does not match state");
  if (state.mode() == RegrowMode::kInstantaneous) state.reset_accumulators();
  const auto add_row = [&](std::size_t row) {
    const auto values = grad.row_values(row);
    if (values.size() != state.cols()) throw ContractError("gradient does not cover a sampled row");
    auto acc = state.accumulator_row(row);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += values[c];
  };
  for (std::size_t u : state.sampled_users()) add_row(u);
  for (std::size_t i : state.sampled_items()) add_row(state.user_rows() + i);
}

RegrowSelection select_regrow_set(const ExplorationState& state, double mu_users, std::size_t grow_total,
                                  const MaskMatrix& post_prune) {
  if (post_prune.rows() != state.sampled_rows().rows() || post_prune.cols() != state.cols()) {
    throw DimensionError("mask does not match exploration state");
  }
  const std::size_t s = state.cols();
  const auto pool_for = [&](std::span<const std::size_t> rows, std::size_t offset) {
    std::vector<Scored> pool;
    for (std::size_t local : rows) {
      const std::size_t r = offset + local;
      const auto acc = state.accumulator_row(r);
      for (std::size_t c = 0; c < s; ++c) {
        if (!post_prune.test(r, c)) pool.push_back({std::abs(acc[c]), r, c});
      }
    }
    return pool;
  };
  auto user_pool = pool_for(state.sampled_users(), 0);
  auto item_pool = pool_for(state.sampled_items(), state.user_rows());

  const auto want_users = std::min(
      grow_total, static_cast<std::size_t>(std::llround(mu_users * static_cast<double>(grow_total))));
  const std::size_t want_items = grow_total - want_users;
  std::size_t take_users = std::min(want_users, user_pool.size());
  std::size_t take_items = std::min(want_items, item_pool.size());
  std::size_t rest = grow_total - take_users - take_items;
  const std::size_t extra_users = std::min(rest, user_pool.size() - take_users);
  take_users += extra_users;
  rest -= extra_users;
  const std::size_t extra_items = std::min(rest, item_pool.size() - take_items);
  take_items += extra_items;
  rest -= extra_items;

  RegrowSelection sel{ParamSet(post_prune.rows(), s), ParamSet(post_prune.rows(), s), rest};
  take_front(user_pool, take_users, descending, sel.users);
  take_front(item_pool, take_items, descending, sel.items);
  return sel;
}

std::string to_json_line(const ExplorationEvent& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["rho"] = e.rho;
  j["prune_users"] = e.prune_users;
  j["prune_items"] = e.prune_items;
  j["grow_users"] = e.grow_users;
  j["grow_items"] = e.grow_items;
  j["mu_users"] = e.mu_users;
  j["nnz_after"] = e.nnz_after;
  j["target"] = e.target;
  j["density_after"] = e.density_after;
  j["shortfall"] = e.shortfall;
  return j.dump();
}

ExplorationResult run_exploration(MaskedEmbeddingTable& table, ExplorationState& state, const FrequencyVector& freqs,
                                  std::size_t t, const ExplorationConfig& cfg, Rng& rng) {
  const std::size_t target = target_active_count(cfg.density, table.rows(), table.cols());
  ExplorationEvent ev;
  ev.step = t;
  ev.rho = state.rho();
  ev.target = target;

  const MagnitudeContributions mu = magnitude_contributions(table);
  ev.mu_users = mu.users;

  PruneSelection prune = select_prune_set(table, state.rho());
  ev.prune_users = prune.users.count();
  ev.prune_items = prune.items.count();
  ParamSet pruned = prune.combined();

  // Prune first so grown positions (which may include just-pruned ones) are
  // inactive when they are zero-initialised.
  table.replace_mask(table.mask().bits() - pruned);
  apply_mask(table);

  const std::size_t after_prune = table.mask().nnz();
  const std::size_t grow_total = target > after_prune ? target - after_prune : 0;
  RegrowSelection grow = select_regrow_set(state, mu.users, grow_total, table.mask());
  ev.grow_users = grow.users.count();
  ev.grow_items = grow.items.count();
  ev.shortfall = grow.shortfall;
  ParamSet grown = grow.combined();

  zero_init_regrown(table, grown);
  table.replace_mask(table.mask().bits() | grown);
  apply_mask(table);

  ev.nnz_after = table.mask().nnz();
  ev.density_after = density(table.mask());
  if (ev.shortfall > 0) {
    spdlog::warn("exploration at step {}: regrowth pool short by {} positions (nnz {} vs target {})", t,
                 ev.shortfall, ev.nnz_after, target);
  }

  state.set_rho(cosine_pruning_rate(static_cast<double>(t), cfg.rho0, static_cast<double>(cfg.total_steps)));
  state.resample(sample_vectors(freqs, cfg.omega, rng));
  return {ev, std::move(pruned), std::move(grown)};
}

double omega_upper_bound(double density) { return (1.0 - density) / 2.0; }

double parse_omega(const std::string& text, double density) {
  const double h = omega_upper_bound(density);
  if (text == "h") return h;
  for (int div : {2, 4, 8, 16}) {
    if (text == "h/" + std::to_string(div)) return h / div;
  }
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError("bad sampling ratio '" + text + "' (number, h, h/2, h/4, h/8 or h/16)");
  }
  return value;
}

MemoryReport memory_accounting(double density, double omega, std::size_t users, std::size_t items, std::size_t cols,
                               std::size_t active_values, std::size_t gradient_support, std::size_t accumulators) {
  const double table = static_cast<double>(cols) * static_cast<double>(users + items);
  MemoryReport r;
  r.active_values = active_values;
  r.gradient_support = gradient_support;
  r.accumulators = accumulators;
  r.total = active_values + gradient_support + accumulators;
  r.sparse_bound = (2.0 * density + 2.0 * omega) * table;
  r.dense_gradient_bound = (density + 1.0) * table;
  r.threshold_table_bound = 3.0 * table;
  r.within_bound = static_cast<double>(r.total) <= r.sparse_bound;
  r.omega_within_limit = omega <= omega_upper_bound(density);
  return r;
}

}  // namespace sparserec
