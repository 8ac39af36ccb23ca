#include "tabvec/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tabvec/error.hpp"

namespace tabvec {

TfIdfModel fit_tfidf(std::span<const TableSequence> corpus) {
  if (corpus.empty()) throw DataError("tf-idf: cannot fit on an empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& seq : corpus) {
    const std::set<std::string_view> unique(seq.tokens.begin(), seq.tokens.end());
    for (const auto token : unique) ++df[std::string(token)];
  }

  TfIdfModel model;
  model.doc_count = corpus.size();
  model.vocabulary.reserve(df.size());
  model.idf.resize(static_cast<Eigen::Index>(df.size()));
  const double n = static_cast<double>(corpus.size());
  for (const auto& [token, count] : df) {
    const auto i = static_cast<Eigen::Index>(model.vocabulary.size());
    model.idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
    model.index.emplace(token, i);
    model.vocabulary.push_back(token);
  }
  return model;
}

FeatureVector encode_tfidf(const TfIdfModel& model, const TableSequence& seq) {
  FeatureVector x = FeatureVector::Zero(model.dim());
  for (const auto& token : seq.tokens)
    if (const auto it = model.index.find(token); it != model.index.end()) x[it->second] += 1.0;
  x.array() *= model.idf.array();
  const double norm = x.norm();
  if (norm > 0) x /= norm;
  return x;
}

FeatureVector mean_word_vector(const EmbeddingLexicon& lexicon, std::span<const std::string> tokens) {
  FeatureVector sum = FeatureVector::Zero(lexicon.dim());
  std::size_t hits = 0;
  for (const auto& token : tokens) {
    if (const auto v = lexicon.lookup(token)) {
      sum += v->cast<double>();
      ++hits;
    }
  }
  if (hits) sum /= static_cast<double>(hits);
  return sum;
}

FeatureVector encode_wordvec(const EmbeddingLexicon& lexicon, const SampledTable& st) {
  const auto d = lexicon.dim();
  FeatureVector out(2 * d);
  out.head(d) = mean_word_vector(lexicon, header_sequence(st).tokens);
  out.tail(d) = mean_word_vector(lexicon, body_sequence(st).tokens);
  return out;
}

FeatureVector mean_pool(const Eigen::MatrixXd& vectors) {
  if (vectors.cols() == 0) throw DataError("mean pooling over zero vectors");
  return vectors.rowwise().mean();
}

FeatureVector encode_pooled_rows(const PrecomputedStore& store, const VectorKey& key) {
  VectorKey k = key;
  k.granularity = Granularity::kRow;
  return mean_pool(store.at(k).vectors);
}

FeatureVector encode_pooled_columns(const PrecomputedStore& store, const VectorKey& key) {
  VectorKey k = key;
  k.granularity = Granularity::kColumn;
  return mean_pool(store.at(k).vectors);
}

std::shared_ptr<const TableEncoder> TableEncoder::fitted(std::span<const SampledTable> train) const {
  (void)train;
  // Non-owning handle: stateless encoders are their own fitted form.
  return std::shared_ptr<const TableEncoder>(std::shared_ptr<const TableEncoder>{}, this);
}

TfIdfEncoder::TfIdfEncoder(TfIdfModel model) : model_(std::make_shared<const TfIdfModel>(std::move(model))) {}

std::shared_ptr<const TableEncoder> TfIdfEncoder::fitted(std::span<const SampledTable> train) const {
  std::vector<TableSequence> corpus;
  corpus.reserve(train.size());
  for (const auto& st : train) corpus.push_back(table_sequence(st));
  return std::make_shared<const TfIdfEncoder>(fit_tfidf(corpus));
}

FeatureVector TfIdfEncoder::encode(const SampledTable& st) const {
  if (!model_) throw ConfigError("tf-idf encoder used before fitting");
  return encode_tfidf(*model_, table_sequence(st));
}

WordVectorEncoder::WordVectorEncoder(std::shared_ptr<const EmbeddingLexicon> lexicon)
    : lexicon_(std::move(lexicon)) {
  if (!lexicon_ || lexicon_->dim() == 0) throw ConfigError("word-vector encoder needs a loaded lexicon");
}

FeatureVector WordVectorEncoder::encode(const SampledTable& st) const { return encode_wordvec(*lexicon_, st); }

std::map<std::string, double> WordVectorEncoder::diagnostics(std::span<const SampledTable> tables) const {
  double total = 0, hits = 0;
  std::set<std::string> types, type_hits;
  for (const auto& st : tables) {
    for (const auto& seq : {header_sequence(st), body_sequence(st)}) {
      for (const auto& t : seq.tokens) {
        total += 1;
        types.insert(t);
        if (lexicon_->contains(t)) {
          hits += 1;
          type_hits.insert(t);
        }
      }
    }
  }
  return {{"token_coverage", total > 0 ? hits / total : 0.0},
          {"type_coverage", types.empty() ? 0.0 : static_cast<double>(type_hits.size()) / static_cast<double>(types.size())},
          {"lexicon_size", static_cast<double>(lexicon_->size())}};
}

PooledEncoder::PooledEncoder(std::shared_ptr<const PrecomputedStore> store, Granularity granularity,
                             std::map<std::string, std::string> utterances, std::string label)
    : store_(std::move(store)), granularity_(granularity), utterances_(std::move(utterances)), label_(std::move(label)) {
  if (!store_) throw ConfigError("pooled encoder needs a precomputed store");
}

VectorKey PooledEncoder::key_for(const SampledTable& st) const {
  VectorKey key{st.id(), granularity_, st.masked(), st.q_requested(), " "};
  if (const auto it = utterances_.find(st.id()); it != utterances_.end()) key.utterance = it->second;
  return key;
}

FeatureVector PooledEncoder::encode(const SampledTable& st) const {
  const VectorKey key = key_for(st);
  const auto& record = store_->at(key);
  const auto n = static_cast<std::size_t>(record.vectors.cols());
  if (granularity_ == Granularity::kRow && n != st.row_count())
    throw DataError("record " + describe(key) + " has " + std::to_string(n) + " row vectors, table has " +
                    std::to_string(st.row_count()) + " sampled rows");
  if (granularity_ == Granularity::kColumn && n != st.base().cols())
    throw DataError("record " + describe(key) + " has " + std::to_string(n) + " column vectors, table has " +
                    std::to_string(st.base().cols()) + " columns");
  return mean_pool(record.vectors);
}

FeatureMatrix encode_dataset(const TableEncoder& encoder, std::span<const SampledTable> tables) {
  FeatureMatrix out;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const FeatureVector x = encoder.encode(tables[i]);
    if (i == 0) {
      if (x.size() == 0) throw DataError(encoder.name() + ": produced an empty feature vector");
      out.resize(x.size(), static_cast<Eigen::Index>(tables.size()));
    }
    if (x.size() != out.rows())
      throw DataError(encoder.name() + ": table '" + tables[i].id() + "' encoded to dim " + std::to_string(x.size()) +
                      ", expected " + std::to_string(out.rows()));
    if (!x.allFinite()) throw DataError(encoder.name() + ": non-finite features for table '" + tables[i].id() + "'");
    out.col(static_cast<Eigen::Index>(i)) = x;
  }
  return out;
}

}  // namespace tabvec
