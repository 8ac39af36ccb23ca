#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "support/synthetic.hpp"
#include "tabvec/error.hpp"
#include "tabvec/runner.hpp"

using namespace tabvec;
namespace fs = std::filesystem;

namespace {

LabeledDataset small_dataset(std::vector<int> per_class = {6, 6}) {
  testing::SyntheticSpec spec;
  spec.tables_per_class = std::move(per_class);
  spec.rows = 6;
  return testing::synthetic_dataset(spec);
}

RunConfig quick_config() {
  RunConfig cfg;
  cfg.k_folds = 3;
  cfg.train.hidden = 8;
  cfg.train.max_epochs = 20;
  cfg.seed = 4;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Stands in for the language-model side: one vector per requested row or
// column derived from its text, written as precomputed JSONL.
void fake_bridge(const std::vector<nlohmann::json>& requests, const fs::path& out) {
  std::ofstream file(out);
  for (const auto& r : requests) {
    PrecomputedTableVectors rec;
    const bool rowwise = r.at("target") == "rowwise";
    rec.key = {r.at("table_id"), rowwise ? Granularity::kRow : Granularity::kColumn, r.at("masked").get<bool>(),
               r.at("q").get<int>(), r.at("utterance")};
    const auto& rows = r.at("rows");
    const auto n = static_cast<Eigen::Index>(rowwise ? rows.size() : r.at("header").size());
    rec.vectors.resize(3, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::string text = rowwise ? rows[j].dump() : r.at("header")[j].get<std::string>();
      const auto h = stable_hash(text.substr(0, 2));
      rec.vectors.col(j) << static_cast<double>(h % 7), static_cast<double>((h >> 8) % 5), 1.0;
    }
    file << to_jsonl(rec) << '\n';
  }
}

}  // namespace

TEST_CASE("encoder ids") {
  CHECK(parse_encoder_id("tfidf").kind == EncoderKind::kTfIdf);
  const auto wv = parse_encoder_id("wordvec:/data/cc.en.300.vec");
  CHECK(wv.kind == EncoderKind::kWordVec);
  CHECK(wv.resource == fs::path("/data/cc.en.300.vec"));
  CHECK(parse_encoder_id("pooled-rows:x.jsonl").kind == EncoderKind::kPooledRows);
  CHECK(parse_encoder_id("pooled-cols:x.jsonl").kind == EncoderKind::kPooledColumns);
  CHECK_THROWS_AS(parse_encoder_id("bert"), ConfigError);
  CHECK_THROWS_AS(parse_encoder_id("wordvec"), ConfigError);
  CHECK_THROWS_AS(parse_encoder_id("wordvec:"), ConfigError);
}

TEST_CASE("utterance modes") {
  const auto ds = small_dataset({3, 3, 3});
  for (const auto mode : all_utterance_modes()) CHECK(parse_utterance_mode(to_string(mode)) == mode);
  CHECK(all_utterance_modes().size() == 5);

  for (const auto& [id, u] : make_utterances(ds, {UtteranceMode::kEmpty, "Thing"}, 0)) CHECK(u == " ");
  for (const auto& [id, u] : make_utterances(ds, {UtteranceMode::kConstant, "Thing"}, 0)) CHECK(u == "Thing");

  const auto correct = make_utterances(ds, {UtteranceMode::kCorrectClass, ""}, 0);
  for (const auto& e : ds.entries()) CHECK(correct.at(e.table.id()) == e.label.name);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto wrong = make_utterances(ds, {UtteranceMode::kWrongClass, ""}, seed);
    std::map<std::string, std::string> mapping;
    for (const auto& e : ds.entries()) {
      const auto& u = wrong.at(e.table.id());
      CHECK(u != e.label.name);
      CHECK(ds.class_index(u) >= 0);
      // Every table of a class gets the same wrong class.
      const auto [it, fresh] = mapping.emplace(e.label.name, u);
      CHECK(it->second == u);
    }
    std::set<std::string> images;
    for (const auto& [from, to] : mapping) images.insert(to);
    CHECK(images.size() == mapping.size());
  }
  CHECK_THROWS_AS(make_utterances(small_dataset({4}), {UtteranceMode::kWrongClass, ""}, 0), ConfigError);
  CHECK_THROWS_AS(wrong_class_shift(1, 0), ConfigError);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto shift = wrong_class_shift(5, s);
    CHECK(shift >= 1);
    CHECK(shift <= 4);
  }

  const auto random = make_utterances(ds, {UtteranceMode::kRandom10, ""}, 3);
  std::set<std::string> distinct;
  for (const auto& [id, u] : random) {
    CHECK(u.size() == 10);
    CHECK(std::all_of(u.begin(), u.end(), [](char c) { return c >= 'a' && c <= 'z'; }));
    distinct.insert(u);
  }
  CHECK(distinct.size() == random.size());
  CHECK(make_utterances(ds, {UtteranceMode::kRandom10, ""}, 3) == random);
}

TEST_CASE("experiment sampling") {
  const Experiment ex(small_dataset(), 1);
  const auto visible = ex.sample(3, false);
  const auto masked = ex.sample(3, true);
  REQUIRE(visible.size() == 12);
  for (std::size_t i = 0; i < visible.size(); ++i) {
    CHECK(visible[i].row_count() == 3);
    CHECK(masked[i].masked());
    CHECK(masked[i].rows() == visible[i].rows());
  }
  CHECK(ex.sample(100, false)[0].row_count() == 6);
  CHECK(ex.vocabulary().contains("unk"));
  CHECK(ex.vocabulary().contains("acol0"));
}

TEST_CASE("grid covers q x masked and is reproducible byte for byte") {
  const Experiment ex(small_dataset(), 2);
  auto cfg = quick_config();
  const auto first = testing::scratch_dir("grid_a");
  cfg.out_dir = first;
  const auto a = run_grid(ex, cfg);
  CHECK(a.cells.size() == 8);
  CHECK(fs::exists(cfg.out_dir / "tfidf" / "q5-masked" / "report.json"));
  CHECK(fs::exists(cfg.out_dir / "manifest.json"));
  const auto summary_a = slurp(cfg.out_dir / "summary.csv");
  CHECK(summary_a.rfind("encoder,visible_q1,visible_q3,visible_q5,visible_q7,masked_q1,masked_q3,masked_q5,masked_q7", 0) == 0);
  CHECK(slurp(cfg.out_dir / "summary.md").find("### Masked column names") != std::string::npos);

  cfg.out_dir = testing::scratch_dir("grid_b");
  cfg.workers = 2;
  run_grid(Experiment(small_dataset(), 2), cfg);
  CHECK(slurp(cfg.out_dir / "summary.csv") == summary_a);
  CHECK(slurp(cfg.out_dir / "tfidf" / "q3-visible" / "confusion.csv") ==
        slurp(first / "tfidf" / "q3-visible" / "confusion.csv"));
}

TEST_CASE("summaries can report pooled or all-class scores") {
  const Experiment ex(small_dataset({6, 6, 2}), 3);
  auto cfg = quick_config();
  cfg.qs = {3};
  cfg.masked = {false};
  cfg.pooled_score = true;
  cfg.macro_labels = MacroLabels::kInventory;
  const auto grid = run_grid(ex, cfg);
  REQUIRE(grid.cells.size() == 1);
  const auto& c = grid.cells[0];
  CHECK(c.score == c.report.pooled_macro_f1);
  CHECK(grid.summary_csv.find(format_score(c.report.pooled_macro_f1)) != std::string::npos);
  CHECK(c.report.manifest.at("macro_average") == "all-classes");
}

TEST_CASE("run config validation") {
  auto cfg = quick_config();
  cfg.qs = {0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config();
  cfg.encoders = {"wordvec:/nonexistent/file.vec"};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config();
  cfg.k_folds = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  const auto j = quick_config().to_json();
  CHECK(j.at("k_folds") == 3);
  CHECK(j.at("mlp").contains("hidden"));
}

TEST_CASE("bridge requests") {
  const Experiment ex(small_dataset({2, 2}), 0);
  const auto utt = make_utterances(ex.dataset(), {UtteranceMode::kCorrectClass, ""}, 0);
  const auto reqs = export_bridge_requests(ex, {1, 3}, {false, true}, utt, BridgeTarget::kRowwise);
  CHECK(reqs.size() == 4 * 2 * 2);
  std::map<std::string, const Table*> by_id;
  for (const auto& t : ex.shuffled()) by_id[t.id()] = &t;
  std::set<std::string> ids;
  for (const auto& r : reqs) {
    ids.insert(r.at("table_id"));
    CHECK(r.at("rows").size() == r.at("q").get<std::size_t>());
    CHECK(r.at("utterance") == utt.at(r.at("table_id")));
    for (const auto& h : r.at("header")) {
      if (r.at("masked").get<bool>())
        CHECK(h == "[UNK]");
      else
        CHECK(h != "[UNK]");
    }
    // The header and rows are exactly what the encoders see for that cell.
    CHECK(r.at("rows")[0][0] == by_id.at(r.at("table_id"))->content_row(0)[0].raw());
  }
  std::set<std::string> expected;
  for (const auto& e : ex.dataset().entries()) expected.insert(e.table.id());
  CHECK(ids == expected);
  CHECK(export_bridge_requests(ex, {1}, {false}, {}, BridgeTarget::kColumnwise)[0].at("target") == "columnwise");
}

TEST_CASE("precomputed vectors round-trip through a pooled grid") {
  const Experiment ex(small_dataset(), 5);
  const auto dir = testing::scratch_dir("bridge");
  const auto empty = make_utterances(ex.dataset(), {}, 0);
  fake_bridge(export_bridge_requests(ex, {1, 3}, {false, true}, empty, BridgeTarget::kRowwise), dir / "rows.jsonl");
  fake_bridge(export_bridge_requests(ex, {1, 3}, {false, true}, empty, BridgeTarget::kColumnwise), dir / "cols.jsonl");

  auto cfg = quick_config();
  cfg.qs = {1, 3};
  cfg.encoders = {"pooled-rows:" + (dir / "rows.jsonl").string(), "pooled-cols:" + (dir / "cols.jsonl").string()};
  const auto grid = run_grid(ex, cfg);
  CHECK(grid.cells.size() == 8);
  for (const auto& c : grid.cells) CHECK(c.report.mean_macro_f1 >= 0.0);

  // A setting the bridge was never asked for.
  cfg.qs = {5};
  try {
    run_grid(ex, cfg);
    FAIL("expected missing vectors");
  } catch (const MissingVectorsError& e) {
    CHECK(std::string(e.what()).find("export-requests") != std::string::npos);
  }
}

TEST_CASE("utterance grid") {
  const Experiment ex(small_dataset(), 1);
  auto cfg = quick_config();
  cfg.qs = {3};
  cfg.out_dir = testing::scratch_dir("utt");
  const auto grid = run_utterance_grid(ex, cfg, {UtteranceMode::kEmpty, UtteranceMode::kConstant});
  CHECK(grid.cells.size() == 4);
  const auto csv = slurp(cfg.out_dir / "utterance_scores.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("hyperparameter search") {
  const Experiment ex(small_dataset(), 1);
  const auto points = search_hyperparameters(ex, quick_config(), "tfidf", 3, false, {4, 8}, {1e-3, 1e-2}, 3);
  CHECK(points.size() == 4);
  for (const auto& p : points) {
    CHECK(p.holdout_macro_f1 >= 0.0);
    CHECK(p.holdout_macro_f1 <= 1.0);
  }
}
