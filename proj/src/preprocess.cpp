#include "tabvec/preprocess.hpp"

#include <numeric>

#include "tabvec/error.hpp"
#include "tabvec/random.hpp"

namespace tabvec {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

void append_tokens(const Row& row, std::vector<std::string>& out) {
  for (const Cell& cell : row) out.insert(out.end(), cell.tokens().begin(), cell.tokens().end());
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  if (text == kMaskLiteral) return {std::string(kMaskToken)};
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Table shuffle_rows(const Table& table, std::uint64_t seed) {
  std::vector<std::size_t> order(table.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, stable_hash(table.id())));
  fisher_yates(order, rng);

  std::vector<Row> rows;
  rows.reserve(table.rows() + 1);
  rows.push_back(table.header());
  for (const std::size_t r : order) rows.push_back(table.content_row(r));
  return Table(table.id(), std::move(rows));
}

SampledTable::SampledTable(Table base, std::vector<std::size_t> rows, int q_requested)
    : base_(std::move(base)), rows_(std::move(rows)), q_requested_(q_requested), header_(base_.header()) {
  for (const std::size_t r : rows_)
    if (r >= base_.rows()) throw DataError("sampled row index out of range for table '" + base_.id() + "'");
}

SampledTable sample_rows(const Table& table, int q) {
  if (q < 1) throw ConfigError("row sample size q must be >= 1, got " + std::to_string(q));
  std::vector<std::size_t> rows(std::min<std::size_t>(static_cast<std::size_t>(q), table.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return SampledTable(table, std::move(rows), q);
}

SampledTable mask_columns(const SampledTable& st) {
  SampledTable out = st;
  for (Cell& cell : out.header_) cell = Cell(kMaskLiteral);
  out.masked_ = true;
  return out;
}

TableSequence header_sequence(const SampledTable& st) {
  TableSequence seq{{}, SequenceOrigin::kHeader};
  append_tokens(st.header(), seq.tokens);
  return seq;
}

TableSequence body_sequence(const SampledTable& st) {
  TableSequence seq{{}, SequenceOrigin::kBody};
  for (std::size_t i = 0; i < st.row_count(); ++i) append_tokens(st.row(i), seq.tokens);
  return seq;
}

TableSequence table_sequence(const SampledTable& st) {
  TableSequence seq = header_sequence(st);
  seq.origin = SequenceOrigin::kFullTable;
  for (std::size_t i = 0; i < st.row_count(); ++i) append_tokens(st.row(i), seq.tokens);
  return seq;
}

std::vector<TableSequence> row_sequences(const SampledTable& st) {
  std::vector<TableSequence> out;
  out.reserve(st.row_count());
  for (std::size_t i = 0; i < st.row_count(); ++i) {
    TableSequence seq{{}, SequenceOrigin::kSingleRow};
    append_tokens(st.row(i), seq.tokens);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace tabvec
