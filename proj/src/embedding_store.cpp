#include "tabvec/embedding_store.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tabvec/error.hpp"

namespace tabvec {

EmbeddingLexicon::EmbeddingLexicon(std::string name, std::vector<std::string> tokens, Storage vectors)
    : name_(std::move(name)), tokens_(std::move(tokens)), vectors_(std::move(vectors)) {
  if (static_cast<Eigen::Index>(tokens_.size()) != vectors_.rows())
    throw DataError("lexicon '" + name_ + "': token count does not match vector count");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<Eigen::Index>(i)).second)
      throw DataError("lexicon '" + name_ + "': duplicate token '" + tokens_[i] + "'");
}

std::optional<EmbeddingLexicon::VectorView> EmbeddingLexicon::lookup(std::string_view token) const {
  if (token.empty()) return std::nullopt;
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return VectorView(vectors_.row(it->second).data(), vectors_.cols());
}

namespace {

// Splits on single spaces / tabs; fastText lines end with a trailing space.
std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

EmbeddingLexicon parse_vec(std::istream& in, const std::string& origin, const VecLoadOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin, 1, "missing '<count> <dim>' header");
  const auto head = split_fields(line);
  std::size_t count = 0;
  long dim = 0;
  if (head.size() != 2 || !parse_number(head[0], count) || !parse_number(head[1], dim) || dim <= 0)
    throw ParseError(origin, 1, "header must be '<count> <dim>'");

  std::size_t wanted = count;
  if (options.vocab_limit > 0) wanted = std::min(wanted, options.vocab_limit);

  std::vector<std::string> tokens;
  std::vector<float> data;
  std::unordered_set<std::string> seen;
  std::size_t duplicates = 0;
  long line_no = 1;
  std::size_t records = 0;
  while (records < count && std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (++records > wanted) break;
    // Tokens may contain non-breaking spaces, so the token is everything
    // before the last `dim` fields.
    const auto fields = split_fields(line);
    if (fields.size() < static_cast<std::size_t>(dim) + 1)
      throw ParseError(origin, line_no,
                       "expected a token and " + std::to_string(dim) + " values, got " +
                           std::to_string(fields.size()) + " fields");
    const std::size_t first_value = fields.size() - static_cast<std::size_t>(dim);
    const char* token_begin = fields.front().data();
    const char* token_end = fields[first_value - 1].data() + fields[first_value - 1].size();
    std::string token(token_begin, token_end);

    if (options.restrict_to && !options.restrict_to->contains(token)) continue;
    if (!seen.insert(token).second) {
      ++duplicates;
      continue;
    }
    const std::size_t offset = data.size();
    data.resize(offset + static_cast<std::size_t>(dim));
    for (long d = 0; d < dim; ++d) {
      const auto f = fields[first_value + static_cast<std::size_t>(d)];
      float v = 0;
      if (!parse_number(f, v) || !std::isfinite(v))
        throw ParseError(origin, line_no, "bad value '" + std::string(f) + "'");
      data[offset + static_cast<std::size_t>(d)] = v;
    }
    tokens.push_back(std::move(token));
  }
  if (records < wanted)
    throw ParseError(origin, line_no, "header promised " + std::to_string(count) + " entries, found " +
                                          std::to_string(records));
  if (duplicates) spdlog::warn("{}: {} duplicate token(s) ignored, first occurrence kept", origin, duplicates);

  EmbeddingLexicon::Storage vectors(static_cast<Eigen::Index>(tokens.size()), dim);
  if (!data.empty()) std::copy(data.begin(), data.end(), vectors.data());
  return EmbeddingLexicon(origin, std::move(tokens), std::move(vectors));
}

EmbeddingLexicon load_vec_file(const std::filesystem::path& path, const VecLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon '" + path.string() + "'");
  auto lexicon = parse_vec(in, path.string(), options);
  spdlog::info("loaded {} word vectors of dim {} from {}", lexicon.size(), lexicon.dim(), path.string());
  return lexicon;
}

void save_vec_file(const EmbeddingLexicon& lexicon, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << lexicon.size() << ' ' << lexicon.dim() << '\n';
  char buf[64];
  for (const auto& token : lexicon.tokens()) {
    out << token;
    const auto v = *lexicon.lookup(token);
    for (Eigen::Index d = 0; d < v.size(); ++d) {
      std::snprintf(buf, sizeof buf, " %.6f", static_cast<double>(v[d]));
      out << buf;
    }
    out << '\n';
  }
}

std::string_view to_string(Granularity g) { return g == Granularity::kRow ? "row" : "column"; }

Granularity parse_granularity(std::string_view text) {
  if (text == "row") return Granularity::kRow;
  if (text == "column") return Granularity::kColumn;
  throw DataError("unknown granularity '" + std::string(text) + "'");
}

std::string describe(const VectorKey& key) {
  return "(table_id='" + key.table_id + "', granularity=" + std::string(to_string(key.granularity)) +
         ", q=" + std::to_string(key.q) + ", masked=" + (key.masked ? "true" : "false") + ", utterance='" +
         key.utterance + "')";
}

void PrecomputedStore::insert(PrecomputedTableVectors record) {
  const auto& v = record.vectors;
  if (v.cols() == 0 || v.rows() == 0) throw DataError("record " + describe(record.key) + " has no vectors");
  if (!v.allFinite()) throw DataError("record " + describe(record.key) + " has non-finite values");
  if (dim_ == 0) dim_ = v.rows();
  if (v.rows() != dim_)
    throw DataError("record " + describe(record.key) + " has dim " + std::to_string(v.rows()) +
                    ", store dim is " + std::to_string(dim_));
  const VectorKey key = record.key;
  if (!records_.emplace(key, std::move(record)).second) throw DataError("duplicate record " + describe(key));
}

const PrecomputedTableVectors* PrecomputedStore::find(const VectorKey& key) const {
  const auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

const PrecomputedTableVectors& PrecomputedStore::at(const VectorKey& key) const {
  if (const auto* r = find(key)) return *r;
  throw MissingVectorsError("no precomputed vectors for " + describe(key));
}

PrecomputedStore parse_precomputed(std::istream& in, const std::string& origin) {
  PrecomputedStore store;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      PrecomputedTableVectors rec;
      rec.key.table_id = obj.at("table_id").get<std::string>();
      rec.key.granularity = parse_granularity(obj.at("granularity").get<std::string>());
      rec.key.q = obj.at("q").get<int>();
      rec.key.masked = obj.at("masked").get<bool>();
      rec.key.utterance = obj.at("utterance").get<std::string>();
      const auto dim = obj.at("dim").get<long>();
      const auto& vectors = obj.at("vectors");
      if (dim <= 0 || !vectors.is_array() || vectors.empty())
        throw DataError("needs dim > 0 and a non-empty 'vectors' array");
      rec.vectors.resize(dim, static_cast<Eigen::Index>(vectors.size()));
      for (std::size_t j = 0; j < vectors.size(); ++j) {
        const auto& vec = vectors[j];
        if (!vec.is_array() || static_cast<long>(vec.size()) != dim)
          throw DataError("vector " + std::to_string(j) + " length differs from dim " + std::to_string(dim));
        for (long d = 0; d < dim; ++d) rec.vectors(d, static_cast<Eigen::Index>(j)) = vec[d].get<double>();
      }
      store.insert(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(origin, line_no, e.what());
    } catch (const DataError& e) {
      throw ParseError(origin, line_no, e.what());
    }
  }
  return store;
}

PrecomputedStore load_precomputed(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open precomputed vectors '" + path.string() + "'");
  return parse_precomputed(in, path.string());
}

std::string to_jsonl(const PrecomputedTableVectors& record) {
  nlohmann::json vectors = nlohmann::json::array();
  for (Eigen::Index j = 0; j < record.vectors.cols(); ++j) {
    nlohmann::json v = nlohmann::json::array();
    for (Eigen::Index d = 0; d < record.vectors.rows(); ++d) v.push_back(record.vectors(d, j));
    vectors.push_back(std::move(v));
  }
  nlohmann::json obj = {{"table_id", record.key.table_id},
                        {"granularity", to_string(record.key.granularity)},
                        {"q", record.key.q},
                        {"masked", record.key.masked},
                        {"utterance", record.key.utterance},
                        {"dim", record.vectors.rows()},
                        {"vectors", std::move(vectors)}};
  return obj.dump();
}

}  // namespace tabvec
