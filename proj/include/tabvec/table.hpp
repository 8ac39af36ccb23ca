#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tabvec {

/// One table entry. The raw text is trimmed of surrounding whitespace and
/// otherwise kept verbatim; tokens are always tokenize(raw).
class Cell {
 public:
  Cell() = default;
  explicit Cell(std::string_view raw);

  const std::string& raw() const { return raw_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Cell& other) const { return raw_ == other.raw_; }

 private:
  std::string raw_;
  std::vector<std::string> tokens_;
};

using Row = std::vector<Cell>;

struct Column {
  Cell header;
  std::vector<Cell> content;
};

/// An entity table: a header row followed by N >= 1 content rows, all of
/// width M >= 1. N counts content rows only.
class Table {
 public:
  /// `rows[0]` is the header. Throws DataError on ragged or empty input.
  Table(std::string id, std::vector<Row> rows);
  Table(std::string id, const std::vector<std::vector<std::string>>& rows);
  Table(std::string id, std::initializer_list<std::initializer_list<std::string_view>> rows);

  const std::string& id() const { return id_; }
  std::size_t rows() const { return cells_.size() - 1; }
  std::size_t cols() const { return cells_.front().size(); }

  const Row& header() const { return cells_.front(); }
  std::span<const Row> content() const { return {cells_.data() + 1, rows()}; }
  const Row& content_row(std::size_t n) const { return cells_.at(n + 1); }

  /// Column m including its header entry. Throws std::out_of_range.
  Column column(std::size_t m) const;

  /// The raw matrix, header first.
  const std::vector<Row>& matrix() const { return cells_; }

  bool operator==(const Table& other) const = default;

 private:
  std::string id_;
  std::vector<Row> cells_;
};

struct ClassLabel {
  std::string name;
  auto operator<=>(const ClassLabel&) const = default;
};

struct LabeledTable {
  Table table;
  ClassLabel label;
};

/// Labeled tables plus the class inventory. Labels are stored both by name
/// and as indices into `classes()`.
class LabeledDataset {
 public:
  /// Throws DataError if a label is outside `classes`, ids repeat, or
  /// `classes` is unsorted or has duplicates.
  LabeledDataset(std::vector<LabeledTable> entries, std::vector<std::string> classes);

  std::size_t size() const { return entries_.size(); }
  std::size_t class_count() const { return classes_.size(); }
  const std::vector<LabeledTable>& entries() const { return entries_; }
  const std::vector<std::string>& classes() const { return classes_; }

  /// Label index of every entry, in entry order.
  const std::vector<int>& label_indices() const { return label_index_; }
  int class_index(std::string_view name) const;

 private:
  std::vector<LabeledTable> entries_;
  std::vector<std::string> classes_;
  std::vector<int> label_index_;
};

enum class SequenceOrigin { kFullTable, kHeader, kBody, kSingleRow };

struct TableSequence {
  std::vector<std::string> tokens;
  SequenceOrigin origin = SequenceOrigin::kFullTable;

  bool operator==(const TableSequence&) const = default;
};

}  // namespace tabvec
