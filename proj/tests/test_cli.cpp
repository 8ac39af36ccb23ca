#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "support/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(TABVEC_CLI) + " --log-level off " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

fs::path dataset() {
  static const fs::path dir = [] {
    const auto d = tabvec::testing::scratch_dir("cli_dataset");
    tabvec::testing::SyntheticSpec spec;
    spec.tables_per_class = {4, 4};
    spec.rows = 5;
    tabvec::testing::write_dataset_dir(tabvec::testing::synthetic_dataset(spec), d);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage and configuration errors exit with 2") {
  CHECK(cli("--no-such-flag") == 2);
  CHECK(cli("run --dataset " + dataset().string() + " --encoder bert") == 2);
  CHECK(cli("run --dataset " + dataset().string() + " --encoder tfidf --k-folds 1") == 2);
  CHECK(cli("gradcheck --step 1") == 2);
  CHECK(cli("run --dataset " + dataset().string() + " --encoder tfidf --macro-average weighted") == 2);
}

TEST_CASE("data errors exit with 3") {
  CHECK(cli("stats --dataset /nonexistent/dataset") == 3);
  const auto bad = tabvec::testing::scratch_dir("cli_bad_vec") / "bad.vec";
  std::ofstream(bad) << "2 3\na 1 0\n";
  CHECK(cli("run --dataset " + dataset().string() + " --encoder wordvec:" + bad.string() + " --k-folds 2") == 3);
}

TEST_CASE("missing precomputed vectors exit with 4") {
  const auto store = tabvec::testing::scratch_dir("cli_store") / "rows.jsonl";
  std::ofstream(store) << R"({"table_id":"elsewhere","granularity":"row","q":1,"masked":false,"utterance":" ","dim":2,"vectors":[[1,2]]})"
                       << '\n';
  CHECK(cli("run --dataset " + dataset().string() + " --encoder pooled-rows:" + store.string() + " --k-folds 2") == 4);
}

TEST_CASE("successful verbs") {
  const auto out = tabvec::testing::scratch_dir("cli_out");
  CHECK(cli("stats --dataset " + dataset().string()) == 0);
  CHECK(cli("ingest --dataset " + dataset().string() + " --out " + (out / "copy").string()) == 0);
  CHECK(line_count(out / "copy" / "gold.csv") == 8);
  CHECK(cli("export-requests --dataset " + dataset().string() + " --q 1,3 --masked both --target columnwise --out " +
            (out / "req.jsonl").string()) == 0);
  CHECK(line_count(out / "req.jsonl") == 8 * 2 * 2);
  CHECK(cli("run --dataset " + dataset().string() + " --encoder tfidf --k-folds 2 --epochs 5 --hidden 4 --out " +
            (out / "run").string()) == 0);
  CHECK(fs::exists(out / "run" / "summary.csv"));
  CHECK(cli("gradcheck --seed 3") == 0);
}
