#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

namespace tabvec {

/// Pre-trained word vectors. Stored as 32-bit floats in one row-major block.
class EmbeddingLexicon {
 public:
  using Storage = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using VectorView = Eigen::Map<const Eigen::VectorXf>;

  EmbeddingLexicon() = default;
  EmbeddingLexicon(std::string name, std::vector<std::string> tokens, Storage vectors);

  const std::string& name() const { return name_; }
  Eigen::Index dim() const { return vectors_.cols(); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Exact-match lookup; empty for OOV tokens.
  std::optional<VectorView> lookup(std::string_view token) const;
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

 private:
  std::string name_;
  std::vector<std::string> tokens_;
  Storage vectors_;
  std::unordered_map<std::string, Eigen::Index> index_;
};

struct VecLoadOptions {
  /// Keep at most this many entries (file order). 0 means no limit.
  std::size_t vocab_limit = 0;
  /// When set, only tokens in this set are kept.
  const std::unordered_set<std::string>* restrict_to = nullptr;
};

/// Reads the fastText `.vec` text format: "<count> <dim>" then one
/// "token f1 .. fdim" line per entry. Duplicate tokens keep the first vector.
EmbeddingLexicon load_vec_file(const std::filesystem::path& path, const VecLoadOptions& options = {});
EmbeddingLexicon parse_vec(std::istream& in, const std::string& origin,
                           const VecLoadOptions& options = {});

/// Writes the lexicon back in `.vec` format with 6 decimals.
void save_vec_file(const EmbeddingLexicon& lexicon, const std::filesystem::path& path);

enum class Granularity { kRow, kColumn };

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view text);

struct VectorKey {
  std::string table_id;
  Granularity granularity = Granularity::kRow;
  bool masked = false;
  int q = 1;
  std::string utterance;

  auto operator<=>(const VectorKey&) const = default;
};

std::string describe(const VectorKey& key);

struct PrecomputedTableVectors {
  VectorKey key;
  /// One vector per column of the matrix.
  Eigen::MatrixXd vectors;
};

/// Precomputed neural table vectors from the LM bridge, keyed by
/// (table id, granularity, masked, q, utterance).
class PrecomputedStore {
 public:
  /// Throws DataError on duplicate keys or a dim different from the store's.
  void insert(PrecomputedTableVectors record);
  const PrecomputedTableVectors* find(const VectorKey& key) const;
  /// Throws MissingVectorsError naming the key.
  const PrecomputedTableVectors& at(const VectorKey& key) const;

  std::size_t size() const { return records_.size(); }
  Eigen::Index dim() const { return dim_; }
  const std::map<VectorKey, PrecomputedTableVectors>& records() const { return records_; }

 private:
  std::map<VectorKey, PrecomputedTableVectors> records_;
  Eigen::Index dim_ = 0;
};

/// Reads the bridge's JSONL output (one record per line).
PrecomputedStore load_precomputed(const std::filesystem::path& path);
PrecomputedStore parse_precomputed(std::istream& in, const std::string& origin);

/// One JSONL line for a record, in the bridge's schema.
std::string to_jsonl(const PrecomputedTableVectors& record);

}  // namespace tabvec
