#include "tabvec/table.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "tabvec/error.hpp"
#include "tabvec/preprocess.hpp"

namespace tabvec {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(ws) - first + 1);
}

}  // namespace

Cell::Cell(std::string_view raw) : raw_(trim(raw)), tokens_(tokenize(raw_)) {}

Table::Table(std::string id, std::vector<Row> rows) : id_(std::move(id)), cells_(std::move(rows)) {
  if (cells_.size() < 2) throw DataError("table '" + id_ + "': needs a header and at least one content row");
  const std::size_t width = cells_.front().size();
  if (width == 0) throw DataError("table '" + id_ + "': needs at least one column");
  for (std::size_t r = 0; r < cells_.size(); ++r)
    if (cells_[r].size() != width)
      throw DataError("table '" + id_ + "': row " + std::to_string(r) + " has " +
                      std::to_string(cells_[r].size()) + " cells, expected " + std::to_string(width));
}

Table::Table(std::string id, const std::vector<std::vector<std::string>>& rows)
    : Table(std::move(id), [&rows] {
        std::vector<Row> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.emplace_back(r.begin(), r.end());
        return out;
      }()) {}

Table::Table(std::string id, std::initializer_list<std::initializer_list<std::string_view>> rows)
    : Table(std::move(id), [&rows] {
        std::vector<Row> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.emplace_back(r.begin(), r.end());
        return out;
      }()) {}

Column Table::column(std::size_t m) const {
  if (m >= cols())
    throw std::out_of_range("table '" + id_ + "': column " + std::to_string(m) + " out of range [0, " +
                            std::to_string(cols()) + ")");
  Column col{cells_.front()[m], {}};
  col.content.reserve(rows());
  for (const Row& r : content()) col.content.push_back(r[m]);
  return col;
}

LabeledDataset::LabeledDataset(std::vector<LabeledTable> entries, std::vector<std::string> classes)
    : entries_(std::move(entries)), classes_(std::move(classes)) {
  if (!std::is_sorted(classes_.begin(), classes_.end()) ||
      std::adjacent_find(classes_.begin(), classes_.end()) != classes_.end())
    throw DataError("class inventory must be sorted and free of duplicates");
  std::unordered_set<std::string> ids;
  label_index_.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (!ids.insert(e.table.id()).second) throw DataError("duplicate table id '" + e.table.id() + "'");
    const int idx = class_index(e.label.name);
    if (idx < 0) throw DataError("table '" + e.table.id() + "' has label '" + e.label.name + "' outside the inventory");
    label_index_.push_back(idx);
  }
}

int LabeledDataset::class_index(std::string_view name) const {
  const auto it = std::lower_bound(classes_.begin(), classes_.end(), name);
  if (it == classes_.end() || *it != name) return -1;
  return static_cast<int>(it - classes_.begin());
}

}  // namespace tabvec
