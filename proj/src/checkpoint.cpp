// Copyright 2026 The SparseRec Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparserec/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "sparserec/errors.hpp"

namespace sparserec {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'S', 'R', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("truncated checkpoint");
  return value;
}

void put_header(std::ostream& out, const CheckpointHeader& h) {
  out.write(kMagic.data(), kMagic.size());
  put(out, h.version);
  put(out, h.users);
  put(out, h.items);
  put(out, h.cols);
  put(out, h.density);
  put(out, static_cast<std::uint8_t>(h.encoding));
  if (h.encoding == ValueEncoding::kInt8) put(out, h.scale);
}

void put_mask(std::ostream& out, const MaskMatrix& mask) {
  const std::size_t total = mask.size();
  std::vector<std::uint8_t> bytes((total + 7) / 8, 0);
  const std::size_t s = mask.cols();
  mask.bits().for_each([&](std::size_t r, std::size_t c) {
    const std::size_t k = r * s + c;
    bytes[k / 8] |= static_cast<std::uint8_t>(1U << (k % 8));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

void write_checkpoint(std::ostream& out, const MaskedEmbeddingTable& table, double density) {
  CheckpointHeader h;
  h.users = table.user_rows();
  h.items = table.item_rows();
  h.cols = table.cols();
  h.density = density;
  put_header(out, h);
  put_mask(out, table.mask());
  table.mask().bits().for_each([&](std::size_t r, std::size_t c) { put(out, table.at(r, c)); });
  if (!out) throw DataError("failed writing checkpoint");
}

void write_checkpoint_int8(std::ostream& out, const MaskMatrix& mask, std::span<const std::int8_t> codes,
                           double scale, double density) {
  if (codes.size() != mask.nnz()) throw DimensionError("one int8 code per active position required");
  CheckpointHeader h;
  h.users = mask.user_rows();
  h.items = mask.item_rows();
  h.cols = mask.cols();
  h.density = density;
  h.encoding = ValueEncoding::kInt8;
  h.scale = scale;
  put_header(out, h);
  put_mask(out, mask);
  out.write(reinterpret_cast<const char*>(codes.data()), static_cast<std::streamsize>(codes.size()));
  if (!out) throw DataError("failed writing checkpoint");
}

LoadedCheckpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError("not a checkpoint file (bad magic)");
  CheckpointHeader h;
  h.version = get<std::uint32_t>(in);
  if (h.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(h.version));
  }
  h.users = get<std::uint64_t>(in);
  h.items = get<std::uint64_t>(in);
  h.cols = get<std::uint64_t>(in);
  h.density = get<double>(in);
  const auto enc = get<std::uint8_t>(in);
  if (enc > 1) throw DataError("unknown value encoding " + std::to_string(enc));
  h.encoding = static_cast<ValueEncoding>(enc);
  if (h.encoding == ValueEncoding::kInt8) h.scale = get<double>(in);

  MaskMatrix mask(h.users, h.items, h.cols);
  const std::size_t total = mask.size();
  std::vector<std::uint8_t> bytes((total + 7) / 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw DataError("truncated checkpoint mask");
  for (std::size_t k = 0; k < total; ++k) {
    if ((bytes[k / 8] >> (k % 8)) & 1U) mask.set(k / h.cols, k % h.cols);
  }

  LoadedCheckpoint loaded{h, MaskedEmbeddingTable(mask), {}};
  auto values = loaded.table.mutable_values();
  if (h.encoding == ValueEncoding::kFloat64) {
    mask.bits().for_each([&](std::size_t r, std::size_t c) { values[r * h.cols + c] = get<double>(in); });
  } else {
    loaded.codes.reserve(mask.nnz());
    mask.bits().for_each([&](std::size_t r, std::size_t c) {
      const auto q = get<std::int8_t>(in);
      loaded.codes.push_back(q);
      values[r * h.cols + c] = static_cast<double>(q) * h.scale;
    });
  }
  return loaded;
}

void save_checkpoint(const std::filesystem::path& path, const MaskedEmbeddingTable& table, double density) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, table, density);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace sparserec
