// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sparserec/masked_embedding.hpp"

namespace sparserec {

// Layout (little-endian):
//   char[4]  magic "SRCK"
//   u32      version (1)
//   u64      m, n, s
//   f64      target density
//   u8       value encoding (0 = f64, 1 = int8 with f64 scale)
//   f64      scale (int8 only)
//   bytes    mask bits, row-major over (m+n)*s, LSB-first, ceil((m+n)s/8) bytes
//   values   one per active position in row-major order (f64 or i8)

enum class ValueEncoding : std::uint8_t { kFloat64 = 0, kInt8 = 1 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t users = 0;
  std::uint64_t items = 0;
  std::uint64_t cols = 0;
  double density = 0.0;
  ValueEncoding encoding = ValueEncoding::kFloat64;
  double scale = 1.0;
};

struct LoadedCheckpoint {
  CheckpointHeader header;
  /// Values are dequantized when the file is int8-encoded.
  MaskedEmbeddingTable table;
  /// Raw codes in active-position order; empty for f64 files.
  std::vector<std::int8_t> codes;
};

void write_checkpoint(std::ostream& out, const MaskedEmbeddingTable& table, double density);
/// `codes` holds one int8 per active position in row-major order.
void write_checkpoint_int8(std::ostream& out, const MaskMatrix& mask, std::span<const std::int8_t> codes,
                           double scale, double density);
LoadedCheckpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const MaskedEmbeddingTable& table, double density);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sparserec
