// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "sparserec/errors.hpp"

namespace sparserec {

CsrMatrix::CsrMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

CsrMatrix CsrMatrix::from_pairs(std::size_t rows, std::size_t cols,
                                std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  CsrMatrix m(rows, cols);
  m.col_idx_.reserve(pairs.size());
  for (const auto& [r, c] : pairs) {
    if (r >= rows || c >= cols) {
      throw IndexError("pair (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
    ++m.row_ptr_[r + 1];
    m.col_idx_.push_back(c);
  }
  std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
  return m;
}

bool CsrMatrix::contains(std::size_t r, std::uint32_t c) const {
  const auto items = row(r);
  return std::binary_search(items.begin(), items.end(), c);
}

CsrMatrix CsrMatrix::transpose() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> flipped;
  flipped.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::uint32_t c : row(r)) flipped.emplace_back(c, static_cast<std::uint32_t>(r));
  }
  return from_pairs(cols_, rows_, std::move(flipped));
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> CsrMatrix::pairs() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::uint32_t c : row(r)) out.emplace_back(static_cast<std::uint32_t>(r), c);
  }
  return out;
}

namespace {

class IdRemap {
 public:
  std::uint32_t operator()(const std::string& id) {
    auto [it, inserted] = index_.try_emplace(id, static_cast<std::uint32_t>(names_.size()));
    if (inserted) names_.push_back(id);
    return it->second;
  }
  std::vector<std::string> release() { return std::move(names_); }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> names_;
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  for (std::string f; ss >> f;) fields.push_back(std::move(f));
  return fields;
}

}  // namespace

RawInteractions parse_interactions(std::istream& in, const std::string& source) {
  IdRemap users;
  IdRemap items;
  std::vector<Interaction> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    if (fields.size() < 2) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected \"user <tab> item\", got \"" +
                      line + "\"");
    }
    pairs.push_back({users(fields[0]), items(fields[1])});
  }
  if (pairs.empty()) throw DataError(source + ": no interactions");
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  RawInteractions raw;
  raw.user_ids = users.release();
  raw.item_ids = items.release();
  raw.num_users = raw.user_ids.size();
  raw.num_items = raw.item_ids.size();
  raw.pairs = std::move(pairs);
  return raw;
}

RawInteractions load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read interactions file " + path.string());
  return parse_interactions(in, path.string());
}

void write_interactions(const std::filesystem::path& path, const RawInteractions& raw) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : raw.pairs) out << raw.user_ids[p.user] << '\t' << raw.item_ids[p.item] << '\n';
}

InteractionDataset split_dataset(const RawInteractions& raw, SplitRatios ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.valid + ratios.test;
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  std::vector<std::vector<std::uint32_t>> per_user(raw.num_users);
  for (const auto& p : raw.pairs) per_user.at(p.user).push_back(p.item);

  std::vector<std::pair<std::uint32_t, std::uint32_t>> train;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> valid;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> test;
  for (std::uint32_t u = 0; u < raw.num_users; ++u) {
    auto& items = per_user[u];
    if (items.empty()) throw DataError("user " + raw.user_ids.at(u) + " has no interactions");
    std::sort(items.begin(), items.end());
    const std::size_t k = items.size();
    std::size_t n_test = 0;
    std::size_t n_valid = 0;
    if (k >= 3) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), u};
      Rng rng(seq);
      std::shuffle(items.begin(), items.end(), rng);
      n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(k)));
      n_valid = static_cast<std::size_t>(std::llround(ratios.valid * static_cast<double>(k)));
      while (n_test + n_valid >= k) (n_valid > 0 ? n_valid : n_test) -= 1;
    }
    const std::size_t n_train = k - n_test - n_valid;
    for (std::size_t i = 0; i < k; ++i) {
      auto& dst = i < n_train ? train : (i < n_train + n_valid ? valid : test);
      dst.emplace_back(u, items[i]);
    }
  }
  InteractionDataset data;
  data.num_users = raw.num_users;
  data.num_items = raw.num_items;
  data.train = CsrMatrix::from_pairs(raw.num_users, raw.num_items, std::move(train));
  data.valid = CsrMatrix::from_pairs(raw.num_users, raw.num_items, std::move(valid));
  data.test = CsrMatrix::from_pairs(raw.num_users, raw.num_items, std::move(test));
  return data;
}

void write_split_cache(const std::filesystem::path& path, const RawInteractions& raw,
                       const InteractionDataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split cache " + path.string());
  const auto emit = [&](const CsrMatrix& m, const char* tag) {
    for (const auto& [u, i] : m.pairs()) out << raw.user_ids[u] << '\t' << raw.item_ids[i] << '\t' << tag << '\n';
  };
  emit(data.train, "train");
  emit(data.valid, "valid");
  emit(data.test, "test");
}

std::pair<RawInteractions, InteractionDataset> read_split_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split cache " + path.string());
  IdRemap users;
  IdRemap items;
  std::vector<Interaction> all;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> parts[3];
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    int tag = -1;
    if (f.size() >= 3) tag = f[2] == "train" ? 0 : f[2] == "valid" ? 1 : f[2] == "test" ? 2 : -1;
    if (tag < 0) throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad split cache line");
    const Interaction x{users(f[0]), items(f[1])};
    all.push_back(x);
    parts[tag].emplace_back(x.user, x.item);
  }
  if (all.empty()) throw DataError(path.string() + ": empty split cache");
  RawInteractions raw;
  raw.user_ids = users.release();
  raw.item_ids = items.release();
  raw.num_users = raw.user_ids.size();
  raw.num_items = raw.item_ids.size();
  std::sort(all.begin(), all.end());
  raw.pairs = std::move(all);
  InteractionDataset data;
  data.num_users = raw.num_users;
  data.num_items = raw.num_items;
  data.train = CsrMatrix::from_pairs(raw.num_users, raw.num_items, std::move(parts[0]));
  data.valid = CsrMatrix::from_pairs(raw.num_users, raw.num_items, std::move(parts[1]));
  data.test = CsrMatrix::from_pairs(raw.num_users, raw.num_items, std::move(parts[2]));
  return {std::move(raw), std::move(data)};
}

FrequencyVector compute_frequencies(const CsrMatrix& train) {
  FrequencyVector f;
  f.users.resize(train.rows());
  f.items.assign(train.cols(), 0);
  for (std::size_t u = 0; u < train.rows(); ++u) {
    f.users[u] = static_cast<std::uint32_t>(train.row_nnz(u));
    for (std::uint32_t i : train.row(u)) ++f.items[i];
  }
  return f;
}

TripletSampler::TripletSampler(const CsrMatrix& train) : train_(&train) {
  for (std::size_t u = 0; u < train.rows(); ++u) {
    if (train.row_nnz(u) == 0 || train.row_nnz(u) >= train.cols()) continue;
    for (std::uint32_t i : train.row(u)) {
      pair_user_.push_back(static_cast<std::uint32_t>(u));
      pair_item_.push_back(i);
    }
  }
  if (pair_user_.empty()) throw DataError("no user has both a positive and a negative item");
}

std::vector<BprTriplet> TripletSampler::sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::uniform_int_distribution<std::size_t> pick_pair(0, pair_user_.size() - 1);
  std::uniform_int_distribution<std::uint32_t> pick_item(0, static_cast<std::uint32_t>(train_->cols() - 1));
  std::vector<BprTriplet> out;
  out.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t k = pick_pair(rng);
    const std::uint32_t u = pair_user_[k];
    std::uint32_t j = pick_item(rng);
    while (train_->contains(u, j)) j = pick_item(rng);
    out.push_back({u, pair_item_[k], j});
  }
  return out;
}

std::vector<BprTriplet> sample_bpr_triplets(const CsrMatrix& train, std::size_t batch_size, Rng& rng) {
  return TripletSampler(train).sample(batch_size, rng);
}

RawInteractions synthesize_interactions(const SynthConfig& cfg) {
  if (cfg.users == 0 || cfg.items == 0 || cfg.topics == 0) throw ConfigError("synthetic sizes must be positive");
  if (cfg.min_per_user * cfg.users > cfg.interactions || cfg.min_per_user > cfg.items) {
    throw ConfigError("synthetic interaction budget too small for min_per_user");
  }
  Rng rng(cfg.seed);
  std::gamma_distribution<double> gamma(0.3, 1.0);
  std::lognormal_distribution<double> activity(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  const auto topic_mix = [&] {
    std::vector<double> v(cfg.topics);
    double total = 0;
    for (double& x : v) total += (x = gamma(rng) + 1e-12);
    for (double& x : v) x /= total;
    return v;
  };
  std::vector<std::vector<double>> item_topics(cfg.items);
  for (auto& t : item_topics) t = topic_mix();

  std::vector<std::size_t> rank(cfg.items);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> log_pop(cfg.items);
  for (std::size_t i = 0; i < cfg.items; ++i) {
    log_pop[i] = -cfg.popularity_exponent * std::log(static_cast<double>(rank[i]) + 10.0);
  }

  std::vector<double> act(cfg.users);
  for (double& a : act) a = activity(rng);
  const double act_total = std::accumulate(act.begin(), act.end(), 0.0);
  const double spare = static_cast<double>(cfg.interactions - cfg.min_per_user * cfg.users);
  const std::size_t cap = std::max(cfg.min_per_user, cfg.items / 2);

  RawInteractions raw;
  raw.num_users = cfg.users;
  raw.num_items = cfg.items;
  for (std::size_t u = 0; u < cfg.users; ++u) raw.user_ids.push_back(std::to_string(u + 1));
  for (std::size_t i = 0; i < cfg.items; ++i) raw.item_ids.push_back(std::to_string(i + 1));

  std::vector<std::pair<double, std::uint32_t>> keys(cfg.items);
  for (std::uint32_t u = 0; u < cfg.users; ++u) {
    const auto theta = topic_mix();
    const auto want = std::min(
        cap, cfg.min_per_user + static_cast<std::size_t>(spare * act[u] / act_total));
    // Gumbel top-k draws `want` distinct items with probability proportional
    // to popularity * exp(affinity * <theta, phi>).
    for (std::uint32_t i = 0; i < cfg.items; ++i) {
      double dot = 0;
      for (std::size_t t = 0; t < cfg.topics; ++t) dot += theta[t] * item_topics[i][t];
      const double gumbel = -std::log(expo(rng));
      keys[i] = {log_pop[i] + cfg.affinity * cfg.topics * dot + gumbel, i};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(want), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (std::size_t k = 0; k < want; ++k) raw.pairs.push_back({u, keys[k].second});
  }
  // Round-trip through the text parser so ids match what a reload of the
  // written file would produce (never-drawn items drop out).
  std::stringstream text;
  for (const auto& p : raw.pairs) text << raw.user_ids[p.user] << '\t' << raw.item_ids[p.item] << '\n';
  return parse_interactions(text, "<synthetic>");
}

}  // namespace sparserec
