// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sparserec {

using Rng = std::mt19937_64;

/// Binary sparse matrix in CSR form; column indices are sorted within a row.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  CsrMatrix(std::size_t rows, std::size_t cols);

  /// Builds from (row, col) pairs; duplicates are collapsed.
  static CsrMatrix from_pairs(std::size_t rows, std::size_t cols,
                              std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t nnz() const { return col_idx_.size(); }
  [[nodiscard]] std::size_t row_nnz(std::size_t r) const { return row_ptr_[r + 1] - row_ptr_[r]; }
  [[nodiscard]] std::span<const std::uint32_t> row(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_nnz(r)};
  }
  [[nodiscard]] bool contains(std::size_t r, std::uint32_t c) const;
  [[nodiscard]] std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  [[nodiscard]] std::span<const std::uint32_t> col_idx() const { return col_idx_; }

  [[nodiscard]] CsrMatrix transpose() const;
  /// Pairs in row-major order.
  [[nodiscard]] std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs() const;

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> col_idx_;
};

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

/// Deduplicated implicit-feedback pairs with contiguous ids.
struct RawInteractions {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Interaction> pairs;
  /// Original ids, indexed by contiguous id.
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
};

/// Reads "user <tab|space> item [ignored...]" lines. Ids are remapped in order
/// of first appearance. Blank lines and lines starting with '#' are skipped.
RawInteractions parse_interactions(std::istream& in, const std::string& source = "<stream>");
RawInteractions load_interactions(const std::filesystem::path& path);
void write_interactions(const std::filesystem::path& path, const RawInteractions& raw);

struct SplitRatios {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
};

struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  CsrMatrix train;
  CsrMatrix valid;
  CsrMatrix test;
};

/// Per-user stratified split; users with fewer than three interactions keep
/// everything in train. Deterministic in `seed`.
InteractionDataset split_dataset(const RawInteractions& raw, SplitRatios ratios, std::uint64_t seed);

/// Writes "user \t item \t {train|valid|test}" using the original ids.
void write_split_cache(const std::filesystem::path& path, const RawInteractions& raw,
                       const InteractionDataset& data);
/// Reads a split cache back; ids are remapped in order of first appearance.
std::pair<RawInteractions, InteractionDataset> read_split_cache(const std::filesystem::path& path);

struct FrequencyVector {
  std::vector<std::uint32_t> users;
  std::vector<std::uint32_t> items;
};

FrequencyVector compute_frequencies(const CsrMatrix& train);

struct BprTriplet {
  std::uint32_t user = 0;
  std::uint32_t pos = 0;
  std::uint32_t neg = 0;
  friend bool operator==(const BprTriplet&, const BprTriplet&) = default;
};

/// Uniform positive pairs from train with rejection-sampled uniform
/// negatives. Users whose positives cover every item are never drawn.
class TripletSampler {
 public:
  explicit TripletSampler(const CsrMatrix& train);

  [[nodiscard]] std::vector<BprTriplet> sample(std::size_t batch_size, Rng& rng) const;
  [[nodiscard]] std::size_t eligible_pairs() const { return pair_user_.size(); }

 private:
  const CsrMatrix* train_;
  std::vector<std::uint32_t> pair_user_;
  std::vector<std::uint32_t> pair_item_;
};

std::vector<BprTriplet> sample_bpr_triplets(const CsrMatrix& train, std::size_t batch_size, Rng& rng);

/// Planted-structure implicit feedback shaped like MovieLens-100K by default:
/// Zipf item popularity, topic affinities, at least `min_per_user` per user.
struct SynthConfig {
  std::size_t users = 943;
  std::size_t items = 1682;
  std::size_t interactions = 100000;
  std::size_t min_per_user = 20;
  std::size_t topics = 12;
  double popularity_exponent = 0.8;
  double affinity = 6.0;
  std::uint64_t seed = 7;
};

RawInteractions synthesize_interactions(const SynthConfig& cfg);

}  // namespace sparserec
