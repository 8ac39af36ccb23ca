#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tabvec/table.hpp"

namespace tabvec {

/// Literal substituted for every column name when masking.
inline constexpr std::string_view kMaskLiteral = "[UNK]";
/// Token the mask literal maps to under tokenize().
inline constexpr std::string_view kMaskToken = "unk";

/// Lowercases ASCII and splits on every maximal run of characters that are
/// not ASCII alphanumerics. Bytes >= 0x80 count as word characters so UTF-8
/// words stay intact. The mask literal yields exactly {kMaskToken}.
std::vector<std::string> tokenize(std::string_view text);

/// Stable 64-bit FNV-1a hash, used to derive per-table seeds.
std::uint64_t stable_hash(std::string_view text);

/// Content rows permuted by a permutation derived from (seed, table id); the
/// header stays in place. Independent of corpus order.
Table shuffle_rows(const Table& table, std::uint64_t seed);

/// The first min(q, N) content rows of a (shuffled) table, optionally with
/// the header masked.
class SampledTable {
 public:
  SampledTable(Table base, std::vector<std::size_t> rows, int q_requested);

  const Table& base() const { return base_; }
  const std::string& id() const { return base_.id(); }
  int q_requested() const { return q_requested_; }
  const std::vector<std::size_t>& rows() const { return rows_; }
  bool masked() const { return masked_; }

  /// Header as seen by encoders: "[UNK]" cells when masked.
  const Row& header() const { return header_; }
  const Row& row(std::size_t i) const { return base_.content_row(rows_.at(i)); }
  std::size_t row_count() const { return rows_.size(); }

  bool operator==(const SampledTable&) const = default;

 private:
  friend SampledTable mask_columns(const SampledTable& st);

  Table base_;
  std::vector<std::size_t> rows_;
  int q_requested_;
  bool masked_ = false;
  Row header_;
};

/// Throws ConfigError when q < 1. Rows beyond N are clamped.
SampledTable sample_rows(const Table& table, int q);

SampledTable mask_columns(const SampledTable& st);

/// Header tokens followed by the selected content rows, row-major.
TableSequence table_sequence(const SampledTable& st);
TableSequence header_sequence(const SampledTable& st);
TableSequence body_sequence(const SampledTable& st);
std::vector<TableSequence> row_sequences(const SampledTable& st);

}  // namespace tabvec
