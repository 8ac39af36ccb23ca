#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "tabvec/embedding_store.hpp"
#include "tabvec/preprocess.hpp"
#include "tabvec/table.hpp"

namespace tabvec {

using FeatureVector = Eigen::VectorXd;
/// Feature vectors stored column-wise: one column per table.
using FeatureMatrix = Eigen::MatrixXd;

/// Smoothed-idf TF-IDF: idf(t) = ln((1 + n) / (1 + df(t))) + 1.
struct TfIdfModel {
  std::vector<std::string> vocabulary;  // sorted
  std::unordered_map<std::string, Eigen::Index> index;
  Eigen::VectorXd idf;
  std::size_t doc_count = 0;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(vocabulary.size()); }
};

/// Throws DataError on an empty corpus.
TfIdfModel fit_tfidf(std::span<const TableSequence> corpus);

/// Raw counts times idf, L2-normalized. OOV tokens are ignored; a sequence
/// without in-vocabulary tokens maps to the zero vector.
FeatureVector encode_tfidf(const TfIdfModel& model, const TableSequence& seq);

/// Mean word vector of a token list over in-lexicon occurrences (64-bit
/// accumulation). Zero when no token is found.
FeatureVector mean_word_vector(const EmbeddingLexicon& lexicon, std::span<const std::string> tokens);

/// Header mean concatenated with body mean; dim is 2 * lexicon.dim().
FeatureVector encode_wordvec(const EmbeddingLexicon& lexicon, const SampledTable& st);

/// Arithmetic mean of a record's vectors.
FeatureVector mean_pool(const Eigen::MatrixXd& vectors);

/// Lookups throw MissingVectorsError when the record is absent.
FeatureVector encode_pooled_rows(const PrecomputedStore& store, const VectorKey& key);
FeatureVector encode_pooled_columns(const PrecomputedStore& store, const VectorKey& key);

/// A frozen table encoder. Encoders with corpus-dependent state (TF-IDF)
/// are fitted per training split via fitted(); the others ignore it.
class TableEncoder {
 public:
  virtual ~TableEncoder() = default;

  virtual std::string name() const = 0;
  virtual bool needs_fit() const { return false; }
  virtual std::shared_ptr<const TableEncoder> fitted(std::span<const SampledTable> train) const;
  virtual FeatureVector encode(const SampledTable& st) const = 0;
  /// Diagnostics for the run manifest (coverage, vocabulary size, ...).
  virtual std::map<std::string, double> diagnostics(std::span<const SampledTable> tables) const {
    (void)tables;
    return {};
  }
};

class TfIdfEncoder : public TableEncoder {
 public:
  TfIdfEncoder() = default;
  explicit TfIdfEncoder(TfIdfModel model);

  std::string name() const override { return "tfidf"; }
  bool needs_fit() const override { return true; }
  std::shared_ptr<const TableEncoder> fitted(std::span<const SampledTable> train) const override;
  /// Throws ConfigError when called before fitting.
  FeatureVector encode(const SampledTable& st) const override;

  const TfIdfModel* model() const { return model_ ? &*model_ : nullptr; }

 private:
  std::shared_ptr<const TfIdfModel> model_;
};

class WordVectorEncoder : public TableEncoder {
 public:
  explicit WordVectorEncoder(std::shared_ptr<const EmbeddingLexicon> lexicon);

  std::string name() const override { return "wordvec:" + lexicon_->name(); }
  FeatureVector encode(const SampledTable& st) const override;
  /// Token-occurrence hit rate over header and body sequences.
  std::map<std::string, double> diagnostics(std::span<const SampledTable> tables) const override;

 private:
  std::shared_ptr<const EmbeddingLexicon> lexicon_;
};

/// Mean-pools precomputed row-wise or column-wise vectors. Checks that a
/// row record has one vector per sampled row and a column record one per
/// column.
class PooledEncoder : public TableEncoder {
 public:
  PooledEncoder(std::shared_ptr<const PrecomputedStore> store, Granularity granularity,
                std::map<std::string, std::string> utterances, std::string label);

  std::string name() const override { return label_; }
  FeatureVector encode(const SampledTable& st) const override;

  VectorKey key_for(const SampledTable& st) const;

 private:
  std::shared_ptr<const PrecomputedStore> store_;
  Granularity granularity_;
  std::map<std::string, std::string> utterances_;
  std::string label_;
};

/// One column per table, in input order. Throws DataError on mixed dims or
/// non-finite entries.
FeatureMatrix encode_dataset(const TableEncoder& encoder, std::span<const SampledTable> tables);

}  // namespace tabvec
