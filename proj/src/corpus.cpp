#include "tabvec/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tabvec/error.hpp"

namespace tabvec {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  constexpr const char* ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(ws) - first + 1);
}

std::string latin1_to_utf8(const std::string& in) {
  std::string out;
  out.reserve(in.size() + in.size() / 8);
  for (const char ch : in) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) {
      out.push_back(ch);
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;  // distinguishes "" from an absent trailing record
  std::size_t i = 0;
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes)
    throw ParseError(origin, static_cast<long>(records.size()), "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string format_csv(const std::vector<std::vector<std::string>>& records) {
  std::string out;
  for (const auto& record : records) {
    for (std::size_t j = 0; j < record.size(); ++j) {
      if (j) out.push_back(',');
      const std::string& f = record[j];
      if (f.find_first_of(",\"\r\n") == std::string::npos) {
        out += f;
      } else {
        out.push_back('"');
        for (const char c : f) {
          if (c == '"') out.push_back('"');
          out.push_back(c);
        }
        out.push_back('"');
      }
    }
    out.push_back('\n');
  }
  return out;
}

Table parse_wdc_table(const std::string& json_text, std::string id, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& first) {
    // Some dumps carry Latin-1 bytes; retry once re-encoded.
    try {
      doc = nlohmann::json::parse(latin1_to_utf8(json_text));
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError(origin, -1, std::string("malformed WDC document: ") + first.what());
    }
  }
  if (!doc.is_object() || !doc.contains("relation") || !doc["relation"].is_array())
    throw ParseError(origin, -1, "WDC document lacks a 'relation' array");

  std::vector<std::vector<std::string>> relation;
  for (const auto& line : doc["relation"]) {
    if (!line.is_array()) throw ParseError(origin, -1, "'relation' must be an array of arrays");
    auto& out = relation.emplace_back();
    for (const auto& v : line) out.push_back(v.is_string() ? v.get<std::string>() : (v.is_null() ? "" : v.dump()));
  }
  if (relation.empty() || relation.front().empty())
    throw DataError(origin + ": empty relation");
  const std::size_t inner = relation.front().size();
  for (std::size_t i = 0; i < relation.size(); ++i)
    if (relation[i].size() != inner)
      throw ParseError(origin, static_cast<long>(i), "ragged relation entry");

  // HORIZONTAL tables store one array per column, so they are transposed into
  // rows. VERTICAL tables list attributes down the page, which makes each
  // stored array already one attribute record.
  const std::string orientation = doc.value("tableOrientation", std::string("HORIZONTAL"));
  std::vector<std::vector<std::string>> rows;
  if (orientation == "VERTICAL") {
    rows = std::move(relation);
  } else {
    if (orientation != "HORIZONTAL")
      spdlog::warn("{}: unknown tableOrientation '{}', treating as HORIZONTAL", origin, orientation);
    rows.assign(inner, std::vector<std::string>(relation.size()));
    for (std::size_t c = 0; c < relation.size(); ++c)
      for (std::size_t r = 0; r < inner; ++r) rows[r][c] = std::move(relation[c][r]);
  }

  const bool has_header = doc.value("hasHeader", true);
  const std::string position = doc.value("headerPosition", std::string("FIRST_ROW"));
  if (!has_header || position == "NONE") {
    rows.insert(rows.begin(), std::vector<std::string>(rows.front().size()));
  } else if (position != "FIRST_ROW") {
    spdlog::warn("{}: headerPosition '{}' unsupported, using the first row", origin, position);
  }
  return Table(std::move(id), rows);
}

Table load_wdc_table(const fs::path& path) {
  return parse_wdc_table(read_file(path), path.stem().string(), path.string());
}

Table parse_csv_table(const std::string& text, std::string id, const std::string& origin) {
  auto records = parse_csv(text, origin);
  if (records.empty()) throw DataError(origin + ": empty table");
  const std::size_t width = records.front().size();
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].size() != width)
      throw ParseError(origin, static_cast<long>(i),
                       "record " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                           " fields, expected " + std::to_string(width));
  if (records.size() < 2) throw DataError(origin + ": table has no content rows");
  return Table(std::move(id), records);
}

Table load_csv_table(const fs::path& path) {
  return parse_csv_table(read_file(path), path.stem().string(), path.string());
}

std::string normalize_table_id(std::string id) {
  id = trim(std::move(id));
  for (const std::string_view suffix : {".tar.gz", ".json", ".csv"})
    if (ends_with(id, suffix)) id.erase(id.size() - suffix.size());
  return id;
}

std::map<std::string, std::string> parse_gold_standard(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> gold;
  const auto records = parse_csv(text, origin);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.size() == 1 && trim(rec[0]).empty()) continue;
    if (rec.size() < 2) throw ParseError(origin, static_cast<long>(i + 1), "expected table_id,class_name");
    std::string id = normalize_table_id(rec[0]);
    std::string cls = trim(rec[1]);
    if (id.empty() || cls.empty()) throw ParseError(origin, static_cast<long>(i + 1), "empty table id or class");
    const auto [it, inserted] = gold.emplace(id, cls);
    if (!inserted && it->second != cls)
      throw DataError(origin + ": table '" + id + "' annotated as both '" + it->second + "' and '" + cls + "'");
  }
  return gold;
}

std::map<std::string, std::string> load_gold_standard(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("gold standard '" + path.string() + "' not found");
  return parse_gold_standard(read_file(path), path.string());
}

LabeledDataset assemble_dataset(std::vector<Table> tables, const std::map<std::string, std::string>& gold,
                                int min_class_count) {
  if (min_class_count < 1) throw ConfigError("min_class_count must be >= 1");

  std::map<std::string, std::size_t> counts;
  std::size_t unannotated = 0;
  std::vector<LabeledTable> joined;
  for (Table& t : tables) {
    const auto it = gold.find(t.id());
    if (it == gold.end()) {
      ++unannotated;
      continue;
    }
    ++counts[it->second];
    joined.push_back({std::move(t), ClassLabel{it->second}});
  }
  if (unannotated) spdlog::info("dropped {} table(s) without a class annotation", unannotated);

  std::vector<std::string> classes;
  for (const auto& [name, n] : counts)
    if (n >= static_cast<std::size_t>(min_class_count)) classes.push_back(name);

  std::vector<LabeledTable> kept;
  for (auto& e : joined)
    if (std::binary_search(classes.begin(), classes.end(), e.label.name)) kept.push_back(std::move(e));
  if (kept.size() != joined.size())
    spdlog::info("dropped {} table(s) of classes with fewer than {} tables", joined.size() - kept.size(),
                 min_class_count);
  if (kept.empty()) throw DataError("assembled dataset is empty");
  return LabeledDataset(std::move(kept), std::move(classes));
}

std::vector<Table> load_table_dir(const fs::path& dir, bool skip_bad_tables) {
  if (!fs::is_directory(dir)) throw DataError("table directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".csv" || ext == ".json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Table> tables;
  std::set<std::string> seen;
  for (const auto& f : files) {
    try {
      Table t = f.extension() == ".json" ? load_wdc_table(f) : load_csv_table(f);
      if (!seen.insert(t.id()).second) throw DataError(f.string() + ": duplicate table id '" + t.id() + "'");
      tables.push_back(std::move(t));
    } catch (const DataError& e) {
      if (!skip_bad_tables) throw;
      spdlog::warn("skipping {}: {}", f.string(), e.what());
    }
  }
  return tables;
}

LabeledDataset load_dataset_dir(const fs::path& dir, int min_class_count, bool skip_bad_tables) {
  auto gold = load_gold_standard(dir / "gold.csv");
  return assemble_dataset(load_table_dir(dir / "tables", skip_bad_tables), gold, min_class_count);
}

CorpusStats corpus_stats(const LabeledDataset& dataset) {
  CorpusStats s;
  s.table_count = dataset.size();
  s.class_count = dataset.class_count();
  double rows = 0, cols = 0;
  for (const auto& e : dataset.entries()) {
    rows += static_cast<double>(e.table.rows());
    cols += static_cast<double>(e.table.cols());
    ++s.class_histogram[e.label.name];
  }
  if (s.table_count) {
    s.mean_rows = rows / static_cast<double>(s.table_count);
    s.mean_cols = cols / static_cast<double>(s.table_count);
  }
  return s;
}

void write_table_csv(const Table& table, const fs::path& path) {
  std::vector<std::vector<std::string>> records;
  for (const Row& r : table.matrix()) {
    auto& rec = records.emplace_back();
    for (const Cell& c : r) rec.push_back(c.raw());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << format_csv(records);
}

}  // namespace tabvec
