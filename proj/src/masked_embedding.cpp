// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/masked_embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sparserec/errors.hpp"

namespace sparserec {

ParamSet::ParamSet(std::size_t rows, std::size_t cols)
    : rows_(rows),
      cols_(cols),
      words_per_row_((cols + kWordBits - 1) / kWordBits),
      words_(rows * words_per_row_, 0) {}

void ParamSet::set_row(std::size_t row) {
  Word* w = words_.data() + row * words_per_row_;
  std::fill(w, w + words_per_row_, ~Word{0});
  if (const std::size_t tail = cols_ % kWordBits; tail != 0) {
    w[words_per_row_ - 1] = (Word{1} << tail) - 1;
  }
}

void ParamSet::clear() { std::fill(words_.begin(), words_.end(), 0); }

void ParamSet::fill() {
  for (std::size_t r = 0; r < rows_; ++r) set_row(r);
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (Word w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::size_t ParamSet::row_count(std::size_t row) const {
  std::size_t n = 0;
  for (Word w : row_words(row)) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::size_t ParamSet::count_rows(std::size_t first, std::size_t last) const {
  std::size_t n = 0;
  for (std::size_t k = first * words_per_row_; k < last * words_per_row_; ++k) {
    n += static_cast<std::size_t>(std::popcount(words_[k]));
  }
  return n;
}

bool ParamSet::row_any(std::size_t row) const {
  const auto w = row_words(row);
  return std::any_of(w.begin(), w.end(), [](Word x) { return x != 0; });
}

void ParamSet::require_same_shape(const ParamSet& other) const {
  if (!same_shape(other)) {
    throw DimensionError("param set shape mismatch: " + std::to_string(rows_) + "x" +
                         std::to_string(cols_) + " vs " + std::to_string(other.rows_) + "x" +
                         std::to_string(other.cols_));
  }
}

bool ParamSet::is_subset_of(const ParamSet& other) const {
  require_same_shape(other);
  for (std::size_t k = 0; k < words_.size(); ++k) {
    if ((words_[k] & ~other.words_[k]) != 0) return false;
  }
  return true;
}

bool ParamSet::intersects(const ParamSet& other) const {
  require_same_shape(other);
  for (std::size_t k = 0; k < words_.size(); ++k) {
    if ((words_[k] & other.words_[k]) != 0) return true;
  }
  return false;
}

ParamSet& ParamSet::operator|=(const ParamSet& other) {
  require_same_shape(other);
  for (std::size_t k = 0; k < words_.size(); ++k) words_[k] |= other.words_[k];
  return *this;
}

ParamSet& ParamSet::operator&=(const ParamSet& other) {
  require_same_shape(other);
  for (std::size_t k = 0; k < words_.size(); ++k) words_[k] &= other.words_[k];
  return *this;
}

ParamSet& ParamSet::operator-=(const ParamSet& other) {
  require_same_shape(other);
  for (std::size_t k = 0; k < words_.size(); ++k) words_[k] &= ~other.words_[k];
  return *this;
}

ParamSet row_expanded(std::span<const std::size_t> rows, std::size_t num_rows,
                      std::size_t cols) {
  ParamSet out(num_rows, cols);
  for (std::size_t r : rows) {
    if (r >= num_rows) throw IndexError("row " + std::to_string(r) + " out of range");
    out.set_row(r);
  }
  return out;
}

MaskMatrix::MaskMatrix(std::size_t user_rows, std::size_t item_rows, std::size_t cols)
    : bits_(user_rows + item_rows, cols), user_rows_(user_rows) {}

void MaskMatrix::set(std::size_t row, std::size_t col) {
  if (!bits_.test(row, col)) {
    bits_.set(row, col);
    ++nnz_;
  }
}

void MaskMatrix::reset(std::size_t row, std::size_t col) {
  if (bits_.test(row, col)) {
    bits_.reset(row, col);
    --nnz_;
  }
}

void MaskMatrix::assign(const ParamSet& active) {
  if (!bits_.same_shape(active)) throw DimensionError("mask shape mismatch");
  bits_ = active;
  nnz_ = bits_.count();
}

double density(const MaskMatrix& mask) {
  return static_cast<double>(mask.nnz()) / static_cast<double>(mask.size());
}

std::size_t target_active_count(double density, std::size_t rows, std::size_t cols) {
  if (!(density >= 0.0 && density <= 1.0)) {
    throw ConfigError("density must lie in [0, 1], got " + std::to_string(density));
  }
  const double total = static_cast<double>(rows) * static_cast<double>(cols);
  return static_cast<std::size_t>(std::llround(density * total));
}

MaskedEmbeddingTable::MaskedEmbeddingTable(MaskMatrix mask)
    : mask_(std::move(mask)), values_(mask_.size(), 0.0) {}

void MaskedEmbeddingTable::replace_mask(const ParamSet& active) {
  ++version_;
  mask_.assign(active);
}

std::size_t MaskedEmbeddingTable::inconsistent_positions() const {
  std::size_t bad = 0;
  const std::size_t s = cols();
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      if (!mask_.test(r, c) && values_[r * s + c] != 0.0) ++bad;
    }
  }
  return bad;
}

void apply_mask(MaskedEmbeddingTable& table) {
  const std::size_t s = table.cols();
  const auto& bits = table.mask().bits();
  auto values = table.mutable_values();
  for (std::size_t r = 0; r < table.rows(); ++r) {
    double* row = values.data() + r * s;
    for (std::size_t c = 0; c < s; ++c) {
      if (!bits.test(r, c)) row[c] = 0.0;
    }
  }
}

void set_mask_from(const ParamSet& plan_active, MaskMatrix& mask) { mask.assign(plan_active); }

void zero_init_regrown(MaskedEmbeddingTable& table, const ParamSet& grown) {
  if (!grown.same_shape(table.mask().bits())) throw DimensionError("grown set shape mismatch");
  if (grown.intersects(table.mask().bits())) {
    throw ContractError("regrown positions overlap the active set");
  }
  const std::size_t s = table.cols();
  auto values = table.mutable_values();
  grown.for_each([&](std::size_t r, std::size_t c) { values[r * s + c] = 0.0; });
}

}  // namespace sparserec
