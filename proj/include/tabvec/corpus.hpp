#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tabvec/table.hpp"

namespace tabvec {

struct CorpusStats {
  std::size_t table_count = 0;
  std::size_t class_count = 0;
  double mean_rows = 0.0;
  double mean_cols = 0.0;
  std::map<std::string, std::size_t> class_histogram;
};

/// RFC-4180 records. Quoted fields may contain separators, doubled quotes
/// and newlines. A trailing newline does not produce an empty record.
std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& origin = "<memory>");

/// Serializes records, quoting fields that need it.
std::string format_csv(const std::vector<std::vector<std::string>>& records);

/// Loads a WDC web-table JSON document. The id is the file stem.
Table load_wdc_table(const std::filesystem::path& path);
Table parse_wdc_table(const std::string& json_text, std::string id,
                      const std::string& origin = "<memory>");

/// First record is the header. Ragged records raise ParseError naming the
/// 0-based record index.
Table load_csv_table(const std::filesystem::path& path);
Table parse_csv_table(const std::string& text, std::string id,
                      const std::string& origin = "<memory>");

/// table id -> class name from a headerless `table_id,class_name[,...]` CSV.
/// Ids are normalized by stripping archive/table file extensions.
std::map<std::string, std::string> load_gold_standard(const std::filesystem::path& path);
std::map<std::string, std::string> parse_gold_standard(const std::string& text,
                                                       const std::string& origin = "<memory>");

/// Strips ".tar.gz", ".json" and ".csv" suffixes so gold ids match file stems.
std::string normalize_table_id(std::string id);

/// Joins tables with their annotations and keeps the classes with at least
/// `min_class_count` tables. Unannotated tables are dropped and logged.
LabeledDataset assemble_dataset(std::vector<Table> tables,
                                const std::map<std::string, std::string>& gold,
                                int min_class_count);

/// Loads every `*.csv` / `*.json` table under `dir/tables` in file-name order
/// plus `dir/gold.csv`, then assembles. Unreadable tables are skipped with a
/// warning when `skip_bad_tables` is set.
LabeledDataset load_dataset_dir(const std::filesystem::path& dir, int min_class_count,
                                bool skip_bad_tables = true);

/// Loads all tables of a directory (csv or json), sorted by file name.
std::vector<Table> load_table_dir(const std::filesystem::path& dir, bool skip_bad_tables);

CorpusStats corpus_stats(const LabeledDataset& dataset);

void write_table_csv(const Table& table, const std::filesystem::path& path);

}  // namespace tabvec
