#include <doctest.h>

#include <cmath>
#include <random>

#include "tabvec/encoders.hpp"
#include "tabvec/error.hpp"

using namespace tabvec;

namespace {

TableSequence seq(std::vector<std::string> tokens) { return {std::move(tokens), SequenceOrigin::kFullTable}; }

std::shared_ptr<const EmbeddingLexicon> toy_lexicon() {
  EmbeddingLexicon::Storage v(3, 2);
  v << 1, 0,  //
      0, 1,   //
      2, 2;
  return std::make_shared<const EmbeddingLexicon>("toy", std::vector<std::string>{"a", "b", "c"}, v);
}

SampledTable sampled(const std::vector<std::vector<std::string>>& rows, int q = 10, std::string id = "t") {
  return sample_rows(Table(std::move(id), rows), q);
}

std::shared_ptr<const PrecomputedStore> toy_store() {
  auto store = std::make_shared<PrecomputedStore>();
  PrecomputedTableVectors rows;
  rows.key = {"t", Granularity::kRow, false, 2, " "};
  rows.vectors.resize(2, 2);
  rows.vectors << 1, 3,  //
      2, 0;
  store->insert(rows);
  PrecomputedTableVectors cols;
  cols.key = {"t", Granularity::kColumn, false, 2, " "};
  cols.vectors.resize(2, 2);
  cols.vectors << 0, 2,  //
      4, -2;
  store->insert(cols);
  return store;
}

}  // namespace

TEST_CASE("tf-idf frozen example") {
  const std::vector<TableSequence> corpus{seq({"a", "a", "b"}), seq({"a"})};
  const auto model = fit_tfidf(corpus);
  CHECK(model.vocabulary == std::vector<std::string>{"a", "b"});
  CHECK(model.idf[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(model.idf[1] == doctest::Approx(1.4054651081081644).epsilon(1e-12));

  const auto x = encode_tfidf(model, corpus[0]);
  CHECK(x[0] == doctest::Approx(0.8181802073667197).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(0.5749618667993135).epsilon(1e-12));

  // Same numbers from the formula directly.
  const double idf_b = std::log(3.0 / 2.0) + 1.0;
  const double norm = std::sqrt(4.0 + idf_b * idf_b);
  CHECK(norm == doctest::Approx(2.4444492570126086).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(idf_b / norm).epsilon(1e-12));

  CHECK(encode_tfidf(model, seq({"zzz", "yyy"})).isZero());
  const auto single = encode_tfidf(model, seq({"a"}));
  CHECK(single[0] == doctest::Approx(1.0));
  CHECK(single[1] == 0.0);
  CHECK_THROWS_AS(fit_tfidf(std::span<const TableSequence>{}), DataError);
}

TEST_CASE("tf-idf vectors are unit or zero and ignore token order") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> word(0, 19), len(0, 12);
  auto random_seq = [&] {
    std::vector<std::string> t(static_cast<std::size_t>(len(rng)));
    for (auto& s : t) s = "w" + std::to_string(word(rng));
    return seq(t);
  };
  std::vector<TableSequence> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(random_seq());
  const auto model = fit_tfidf(corpus);
  for (int i = 0; i < 200; ++i) {
    auto s = random_seq();
    s.tokens.push_back("never-seen");
    const auto x = encode_tfidf(model, s);
    const double n = x.norm();
    CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-9));
    CHECK((x.array() >= 0).all());
    std::shuffle(s.tokens.begin(), s.tokens.end(), rng);
    CHECK(encode_tfidf(model, s) == x);
  }
}

TEST_CASE("tf-idf encoder must be fitted and fits on the training split only") {
  const TfIdfEncoder raw;
  const auto st = sampled({{"h"}, {"x"}});
  CHECK_THROWS_AS(raw.encode(st), ConfigError);
  const std::vector<SampledTable> train{sampled({{"h"}, {"x"}}, 10, "a"), sampled({{"h"}, {"y"}}, 10, "b")};
  const auto fitted = raw.fitted(train);
  const auto* model = dynamic_cast<const TfIdfEncoder&>(*fitted).model();
  REQUIRE(model);
  CHECK(model->vocabulary == std::vector<std::string>{"h", "x", "y"});
  CHECK(fitted->encode(sampled({{"unseen"}, {"zzz"}})).isZero());
}

TEST_CASE("word-vector encoder examples") {
  const auto lex = toy_lexicon();
  const WordVectorEncoder enc(lex);
  const auto x = enc.encode(sampled({{"a", "oov"}, {"a", "b"}}));
  REQUIRE(x.size() == 4);
  CHECK(x == Eigen::Vector4d(1, 0, 0.5, 0.5));

  // Occurrences, not types, are averaged.
  const auto y = enc.encode(sampled({{"b"}, {"a a b"}}));
  CHECK(y.tail(2).isApprox(Eigen::Vector2d(2.0 / 3, 1.0 / 3)));
  CHECK(enc.encode(sampled({{"zzz"}, {"a"}})).head(2).isZero());
  CHECK(mean_word_vector(*lex, std::vector<std::string>{"a", "a"}) == Eigen::Vector2d(1, 0));
  CHECK(mean_word_vector(*lex, std::vector<std::string>{}).isZero());
}

TEST_CASE("word-vector body mean does not depend on row order") {
  const WordVectorEncoder enc(toy_lexicon());
  const auto x = enc.encode(sampled({{"h", "h"}, {"a", "b"}, {"c", "c"}, {"b", "oov"}}));
  const auto y = enc.encode(sampled({{"h", "h"}, {"b", "oov"}, {"a", "b"}, {"c", "c"}}));
  CHECK((x - y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("masking only changes the header half") {
  const WordVectorEncoder enc(toy_lexicon());
  const auto st = sampled({{"a", "b"}, {"c", "a"}, {"b", "b"}});
  const auto visible = enc.encode(st);
  const auto masked = enc.encode(mask_columns(st));
  CHECK(masked.tail(2) == visible.tail(2));
  CHECK(masked.head(2).isZero());  // "unk" is not in the toy lexicon
}

TEST_CASE("word-vector diagnostics") {
  const WordVectorEncoder enc(toy_lexicon());
  const std::vector<SampledTable> tables{sampled({{"a", "oov"}, {"a", "b"}})};
  const auto d = enc.diagnostics(tables);
  CHECK(d.at("token_coverage") == doctest::Approx(3.0 / 4));
  CHECK(d.at("type_coverage") == doctest::Approx(2.0 / 3));
  CHECK(d.at("lexicon_size") == 3);
}

TEST_CASE("pooled encoders") {
  const auto store = toy_store();
  const VectorKey key{"t", Granularity::kRow, false, 2, " "};
  CHECK(encode_pooled_rows(*store, key) == Eigen::Vector2d(2, 1));
  CHECK(encode_pooled_columns(*store, key) == Eigen::Vector2d(1, 1));

  const auto st = sampled({{"x", "y"}, {"1", "2"}, {"3", "4"}, {"5", "6"}}, 2);
  const PooledEncoder rows(store, Granularity::kRow, {}, "pooled-rows");
  const PooledEncoder cols(store, Granularity::kColumn, {}, "pooled-cols");
  CHECK(rows.encode(st) == Eigen::Vector2d(2, 1));
  CHECK(cols.encode(st) == Eigen::Vector2d(1, 1));

  CHECK_THROWS_AS(rows.encode(mask_columns(st)), MissingVectorsError);
  const PooledEncoder other_utterance(store, Granularity::kRow, {{"t", "Thing"}}, "x");
  CHECK_THROWS_AS(other_utterance.encode(st), MissingVectorsError);
  // The record holds 2 row vectors but q = 3 samples three rows.
  auto store3 = std::make_shared<PrecomputedStore>();
  PrecomputedTableVectors bad{{"t", Granularity::kRow, false, 3, " "}, Eigen::MatrixXd::Ones(2, 2)};
  store3->insert(bad);
  CHECK_THROWS_AS(PooledEncoder(store3, Granularity::kRow, {}, "x").encode(sampled({{"x", "y"}, {"1", "2"}, {"3", "4"}, {"5", "6"}}, 3)),
                  DataError);
}

TEST_CASE("mean pooling of identical vectors returns the vector") {
  std::mt19937 rng(3);
  std::normal_distribution<double> normal;
  for (int k = 1; k <= 9; ++k) {
    Eigen::VectorXd v(5);
    for (auto& x : v) x = normal(rng);
    const Eigen::MatrixXd copies = v.replicate(1, k);
    CHECK((mean_pool(copies) - v).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(mean_pool(Eigen::MatrixXd(3, 0)), DataError);
}

TEST_CASE("encode_dataset stacks columns and checks dims") {
  const WordVectorEncoder enc(toy_lexicon());
  const std::vector<SampledTable> tables{sampled({{"a"}, {"b"}}, 10, "x"), sampled({{"c"}, {"a"}}, 10, "y")};
  const auto X = encode_dataset(enc, tables);
  CHECK(X.rows() == 4);
  CHECK(X.cols() == 2);
  CHECK(X.col(1) == Eigen::Vector4d(2, 2, 1, 0));
}
