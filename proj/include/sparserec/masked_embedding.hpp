// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sparserec {

/// Packed binary matrix over an embedding-table shape.
///
/// Each row starts on a fresh 64-bit word so row-level operations never
/// straddle rows; padding bits past `cols()` are always zero. All set algebra
/// is word-wise.
class ParamSet {
 public:
  using Word = std::uint64_t;
  static constexpr std::size_t kWordBits = 64;

  ParamSet() = default;
  ParamSet(std::size_t rows, std::size_t cols);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t words_per_row() const { return words_per_row_; }
  [[nodiscard]] bool same_shape(const ParamSet& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  [[nodiscard]] bool test(std::size_t row, std::size_t col) const {
    return (words_[word_index(row, col)] >> (col % kWordBits)) & 1U;
  }
  void set(std::size_t row, std::size_t col) {
    words_[word_index(row, col)] |= Word{1} << (col % kWordBits);
  }
  void reset(std::size_t row, std::size_t col) {
    words_[word_index(row, col)] &= ~(Word{1} << (col % kWordBits));
  }
  void assign(std::size_t row, std::size_t col, bool on) {
    on ? set(row, col) : reset(row, col);
  }

  /// Marks every column of `row`.
  void set_row(std::size_t row);
  void clear();
  void fill();

  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] std::size_t row_count(std::size_t row) const;
  [[nodiscard]] std::size_t count_rows(std::size_t first, std::size_t last) const;
  [[nodiscard]] bool none() const { return count() == 0; }
  [[nodiscard]] bool row_any(std::size_t row) const;

  /// True iff every bit of *this is also set in `other`.
  [[nodiscard]] bool is_subset_of(const ParamSet& other) const;
  [[nodiscard]] bool intersects(const ParamSet& other) const;

  ParamSet& operator|=(const ParamSet& other);
  ParamSet& operator&=(const ParamSet& other);
  /// Set difference: clears every bit that is set in `other`.
  ParamSet& operator-=(const ParamSet& other);

  friend ParamSet operator|(ParamSet a, const ParamSet& b) { return a |= b; }
  friend ParamSet operator&(ParamSet a, const ParamSet& b) { return a &= b; }
  friend ParamSet operator-(ParamSet a, const ParamSet& b) { return a -= b; }
  friend bool operator==(const ParamSet&, const ParamSet&) = default;

  [[nodiscard]] std::span<const Word> row_words(std::size_t row) const {
    return {words_.data() + row * words_per_row_, words_per_row_};
  }
  [[nodiscard]] std::span<const Word> words() const { return words_; }

  /// Calls fn(row, col) for every set bit in row-major order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t r = 0; r < rows_; ++r) for_each_in_row(r, fn);
  }

  template <typename Fn>
  void for_each_in_row(std::size_t row, Fn&& fn) const {
    const Word* w = words_.data() + row * words_per_row_;
    for (std::size_t k = 0; k < words_per_row_; ++k) {
      Word bits = w[k];
      while (bits != 0) {
        const auto bit = static_cast<std::size_t>(std::countr_zero(bits));
        fn(row, k * kWordBits + bit);
        bits &= bits - 1;
      }
    }
  }

 private:
  [[nodiscard]] std::size_t word_index(std::size_t row, std::size_t col) const {
    return row * words_per_row_ + col / kWordBits;
  }
  void require_same_shape(const ParamSet& other) const;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<Word> words_;
};

/// Row-expanded set: every column of each listed row.
ParamSet row_expanded(std::span<const std::size_t> rows, std::size_t num_rows,
                      std::size_t cols);

/// Binary activity pattern over the stacked [users; items] table.
///
/// Rows [0, user_rows) belong to users, [user_rows, rows) to items. The
/// active count is maintained on every mutation.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  MaskMatrix(std::size_t user_rows, std::size_t item_rows, std::size_t cols);

  [[nodiscard]] std::size_t rows() const { return bits_.rows(); }
  [[nodiscard]] std::size_t cols() const { return bits_.cols(); }
  [[nodiscard]] std::size_t user_rows() const { return user_rows_; }
  [[nodiscard]] std::size_t item_rows() const { return rows() - user_rows_; }
  [[nodiscard]] std::size_t size() const { return rows() * cols(); }

  [[nodiscard]] bool test(std::size_t row, std::size_t col) const { return bits_.test(row, col); }
  void set(std::size_t row, std::size_t col);
  void reset(std::size_t row, std::size_t col);

  [[nodiscard]] std::size_t nnz() const { return nnz_; }
  [[nodiscard]] std::size_t user_nnz() const { return bits_.count_rows(0, user_rows_); }
  [[nodiscard]] std::size_t item_nnz() const { return bits_.count_rows(user_rows_, rows()); }
  [[nodiscard]] std::size_t row_nnz(std::size_t row) const { return bits_.row_count(row); }
  [[nodiscard]] std::size_t recount() const { return bits_.count(); }

  [[nodiscard]] const ParamSet& bits() const { return bits_; }
  /// Replaces the pattern wholesale; shapes must agree.
  void assign(const ParamSet& active);

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

 private:
  ParamSet bits_;
  std::size_t user_rows_ = 0;
  std::size_t nnz_ = 0;
};

/// nnz(M) / ((m + n) s).
double density(const MaskMatrix& mask);

/// round(d (m + n) s), the exact active count every exploration restores.
std::size_t target_active_count(double density, std::size_t rows, std::size_t cols);

/// Dense value storage with a hard-zeroed mask.
///
/// Every inactive position holds exactly 0, so `values()` is the effective
/// table E * M. `version()` advances on every mutation so cached forward
/// passes can detect staleness.
class MaskedEmbeddingTable {
 public:
  MaskedEmbeddingTable() = default;
  explicit MaskedEmbeddingTable(MaskMatrix mask);

  [[nodiscard]] std::size_t rows() const { return mask_.rows(); }
  [[nodiscard]] std::size_t cols() const { return mask_.cols(); }
  [[nodiscard]] std::size_t user_rows() const { return mask_.user_rows(); }
  [[nodiscard]] std::size_t item_rows() const { return mask_.item_rows(); }

  [[nodiscard]] const MaskMatrix& mask() const { return mask_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  /// Raw write access. Callers must re-apply the mask before the next read
  /// that relies on the zero invariant.
  [[nodiscard]] std::span<double> mutable_values() {
    ++version_;
    return values_;
  }
  [[nodiscard]] std::span<double> mutable_row(std::size_t r) {
    ++version_;
    return {values_.data() + r * cols(), cols()};
  }

  /// Replaces the mask without touching values (pair with apply_mask).
  void replace_mask(const ParamSet& active);

  [[nodiscard]] std::uint64_t version() const { return version_; }

  /// Count of positions where the mask is 0 but the stored value is not.
  [[nodiscard]] std::size_t inconsistent_positions() const;

 private:
  MaskMatrix mask_;
  std::vector<double> values_;
  std::uint64_t version_ = 0;
};

/// values_ij <- 0 wherever M_ij = 0.
void apply_mask(MaskedEmbeddingTable& table);

/// Sets the mask bits to `plan_active`.
void set_mask_from(const ParamSet& plan_active, MaskMatrix& mask);

/// Zeroes the values at `grown`; every grown bit must be inactive in the
/// table's current (pre-activation) mask.
void zero_init_regrown(MaskedEmbeddingTable& table, const ParamSet& grown);

}  // namespace sparserec
