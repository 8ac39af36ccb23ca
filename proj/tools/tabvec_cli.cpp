#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tabvec/corpus.hpp"
#include "tabvec/error.hpp"
#include "tabvec/eval.hpp"
#include "tabvec/mlp.hpp"
#include "tabvec/runner.hpp"

namespace fs = std::filesystem;
using namespace tabvec;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitMissingVectors = 4;

std::vector<bool> masked_settings(const std::string& value) {
  if (value == "on") return {true};
  if (value == "off") return {false};
  if (value == "both") return {false, true};
  throw ConfigError("--masked must be on, off or both");
}

nlohmann::json stats_json(const CorpusStats& s) {
  return {{"table_count", s.table_count},
          {"class_count", s.class_count},
          {"mean_rows", s.mean_rows},
          {"mean_cols", s.mean_cols},
          {"class_histogram", s.class_histogram}};
}

struct Options {
  std::string dataset;
  std::vector<std::string> encoders;
  std::vector<int> qs;
  std::string masked;
  std::string utterance = "empty";
  std::vector<std::string> utterances;
  std::string constant_text = "Thing";
  int k_folds = 20;
  std::uint64_t seed = 0;
  std::string out;
  int workers = 1;
  std::size_t vocab_limit = 0;
  int min_class_count = 2;
  bool transductive = false;
  std::string macro_average = "observed";
  bool pooled_score = false;
  int max_epochs = 200;
  int hidden = 500;
  double learning_rate = 1e-3;
};

void add_run_flags(CLI::App* cmd, Options& o, bool multi_encoder) {
  cmd->add_option("--dataset", o.dataset, "Dataset directory (tables/ + gold.csv)")->required();
  if (multi_encoder)
    cmd->add_option("--encoder", o.encoders, "Encoder id; repeatable")->required();
  else
    cmd->add_option("--encoder", o.encoders, "Encoder id")->required()->expected(1);
  cmd->add_option("--q", o.qs, "Sampled rows per table, comma separated")->delimiter(',');
  cmd->add_option("--masked", o.masked, "Column-name masking: on, off or both");
  cmd->add_option("--utterance", o.utterance, "Utterance mode for pooled encoders");
  cmd->add_option("--constant-text", o.constant_text, "Text of the constant utterance");
  cmd->add_option("--k-folds", o.k_folds, "Stratified folds");
  cmd->add_option("--seed", o.seed, "Master seed (shuffle, folds, initialization)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--workers", o.workers, "Parallel fold workers");
  cmd->add_option("--vocab-limit", o.vocab_limit, "Read at most this many lexicon entries");
  cmd->add_option("--min-class-count", o.min_class_count, "Keep classes with at least this many tables");
  cmd->add_flag("--transductive", o.transductive, "Fit TF-IDF on all tables instead of training folds");
  cmd->add_option("--macro-average", o.macro_average, "Classes in the macro average: observed or all-classes")
      ->check(CLI::IsMember({"observed", "all-classes"}));
  cmd->add_flag("--pooled-score", o.pooled_score, "Summarize with pooled-prediction macro-F1 instead of the fold mean");
  cmd->add_option("--epochs", o.max_epochs, "Maximum training epochs");
  cmd->add_option("--hidden", o.hidden, "Hidden layer width");
  cmd->add_option("--lr", o.learning_rate, "Adam learning rate");
}

RunConfig make_config(const Options& o, std::vector<int> default_qs, const std::string& default_masked) {
  RunConfig cfg;
  cfg.dataset_dir = o.dataset;
  cfg.encoders = o.encoders;
  cfg.qs = o.qs.empty() ? default_qs : o.qs;
  cfg.masked = masked_settings(o.masked.empty() ? default_masked : o.masked);
  cfg.utterance.mode = parse_utterance_mode(o.utterance);
  cfg.utterance.constant_text = o.constant_text;
  cfg.k_folds = o.k_folds;
  cfg.seed = o.seed;
  cfg.out_dir = o.out;
  cfg.workers = o.workers;
  cfg.vocab_limit = o.vocab_limit;
  cfg.min_class_count = o.min_class_count;
  cfg.transductive_tfidf = o.transductive;
  cfg.macro_labels = o.macro_average == "all-classes" ? MacroLabels::kInventory : MacroLabels::kObserved;
  cfg.pooled_score = o.pooled_score;
  cfg.train.max_epochs = o.max_epochs;
  cfg.train.hidden = o.hidden;
  cfg.train.learning_rate = o.learning_rate;
  cfg.validate();
  return cfg;
}

int cmd_ingest(const std::string& dataset, const std::string& tables_dir, const std::string& gold_path,
               const std::string& out, int min_class_count) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path tables = tables_dir.empty() ? fs::path(dataset) / "tables" : fs::path(tables_dir);
  const fs::path gold = gold_path.empty() ? fs::path(dataset) / "gold.csv" : fs::path(gold_path);
  const auto ds = assemble_dataset(load_table_dir(tables, true), load_gold_standard(gold), min_class_count);
  if (!out.empty()) {
    fs::create_directories(fs::path(out) / "tables");
    std::vector<std::vector<std::string>> gold_rows;
    for (const auto& e : ds.entries()) {
      write_table_csv(e.table, fs::path(out) / "tables" / (e.table.id() + ".csv"));
      gold_rows.push_back({e.table.id(), e.label.name});
    }
    std::ofstream(fs::path(out) / "gold.csv") << format_csv(gold_rows);
  }
  auto j = stats_json(corpus_stats(ds));
  j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_stats(const std::string& dataset, int min_class_count) {
  const auto start = std::chrono::steady_clock::now();
  const auto ds = load_dataset_dir(dataset, min_class_count);
  auto j = stats_json(corpus_stats(ds));
  j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double h, double scale) {
  constexpr int kInputs = 6, kHidden = 5, kClasses = 3, kBatch = 8;
  auto params = glorot_init<double>(kInputs, kHidden, kClasses, seed);
  params.w1 *= scale;
  params.w2 *= scale;
  Rng rng(mix_seed(seed, 1));
  params.b1 = params.b1.unaryExpr([&](double) { return (uniform_unit(rng) - 0.5) * scale; });
  params.b2 = params.b2.unaryExpr([&](double) { return (uniform_unit(rng) - 0.5) * scale; });
  Eigen::MatrixXd x(kInputs, kBatch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2 * uniform_unit(rng) - 1;
  std::vector<int> y(kBatch);
  for (auto& v : y) v = static_cast<int>(uniform_index(rng, kClasses));
  const double err = gradient_check(params, x, std::span<const int>(y), h);
  std::cout << nlohmann::json{{"max_relative_error", err}, {"h", h}, {"threshold", 1e-4}, {"pass", err < 1e-4}}.dump(2)
            << '\n';
  return err < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table-to-class annotation benchmark: encode tables, train a frozen-encoder classifier, evaluate."};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  std::string ingest_tables, ingest_gold, dataset, out;
  int min_class_count = 2;
  auto* ingest = app.add_subcommand("ingest", "Load a table dump and gold standard, write the canonical CSV layout");
  ingest->add_option("--dataset", dataset, "Directory with tables/ and gold.csv");
  ingest->add_option("--tables", ingest_tables, "Table directory (overrides --dataset)");
  ingest->add_option("--gold", ingest_gold, "Gold standard CSV (overrides --dataset)");
  ingest->add_option("--out", out, "Write tables/*.csv and gold.csv here");
  ingest->add_option("--min-class-count", min_class_count, "Keep classes with at least this many tables");

  auto* stats = app.add_subcommand("stats", "Corpus statistics of a dataset directory");
  stats->add_option("--dataset", dataset, "Dataset directory")->required();
  stats->add_option("--min-class-count", min_class_count, "Keep classes with at least this many tables");

  Options run_opts, grid_opts, utt_opts, search_opts, export_opts;
  auto* run = app.add_subcommand("run", "Cross-validate one encoder configuration");
  add_run_flags(run, run_opts, false);
  auto* grid = app.add_subcommand("grid", "Encoders x q x masking grid with a summary table");
  add_run_flags(grid, grid_opts, true);
  auto* grid_utt = app.add_subcommand("grid-utterance", "Utterance ablation for pooled encoders");
  add_run_flags(grid_utt, utt_opts, true);
  grid_utt->add_option("--modes", utt_opts.utterances, "Utterance modes (default: all)")->delimiter(',');

  auto* exporter = app.add_subcommand("export-requests", "Write LM bridge encoding requests as JSONL");
  std::string target = "rowwise";
  exporter->add_option("--dataset", export_opts.dataset, "Dataset directory")->required();
  exporter->add_option("--q", export_opts.qs, "Sampled rows per table")->delimiter(',');
  exporter->add_option("--masked", export_opts.masked, "on, off or both");
  exporter->add_option("--utterance", export_opts.utterance, "Utterance mode");
  exporter->add_option("--constant-text", export_opts.constant_text, "Text of the constant utterance");
  exporter->add_option("--seed", export_opts.seed, "Master seed");
  exporter->add_option("--min-class-count", export_opts.min_class_count, "Class filter");
  exporter->add_option("--target", target, "rowwise or columnwise");
  exporter->add_option("--out", export_opts.out, "Request file")->required();

  std::uint64_t gc_seed = 0;
  double gc_h = 1e-5, gc_scale = 1.0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare backpropagation against central differences");
  gradcheck->add_option("--seed", gc_seed, "Seed of the random network");
  gradcheck->add_option("--step", gc_h, "Finite-difference step")->check(CLI::Range(1e-6, 1e-4));
  gradcheck->add_option("--scale", gc_scale, "Weight scale (small values probe the linear regime)");

  std::vector<int> search_hidden = {100, 250, 500, 1000};
  std::vector<double> search_lr = {1e-4, 1e-3, 1e-2};
  int holdout_folds = 5;
  auto* search = app.add_subcommand("search", "Hyperparameter grid on a stratified hold-out split");
  add_run_flags(search, search_opts, false);
  search->add_option("--hidden-sizes", search_hidden, "Hidden widths")->delimiter(',');
  search->add_option("--lrs", search_lr, "Learning rates")->delimiter(',');
  search->add_option("--holdout-folds", holdout_folds, "Validation set is 1/N of the data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%l] %v");

  try {
    if (*ingest) {
      if (dataset.empty() && (ingest_tables.empty() || ingest_gold.empty()))
        throw ConfigError("ingest needs --dataset or both --tables and --gold");
      return cmd_ingest(dataset, ingest_tables, ingest_gold, out, min_class_count);
    }
    if (*stats) return cmd_stats(dataset, min_class_count);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_h, gc_scale);

    if (*exporter) {
      const auto qs = export_opts.qs.empty() ? std::vector<int>{1, 3, 5, 7} : export_opts.qs;
      const auto masked = masked_settings(export_opts.masked.empty() ? "both" : export_opts.masked);
      if (target != "rowwise" && target != "columnwise") throw ConfigError("--target must be rowwise or columnwise");
      for (int q : qs)
        if (q < 1) throw ConfigError("q values must be positive");
      Experiment experiment(load_dataset_dir(export_opts.dataset, export_opts.min_class_count), export_opts.seed);
      UtteranceSpec spec{parse_utterance_mode(export_opts.utterance), export_opts.constant_text};
      const auto requests = export_bridge_requests(experiment, qs, masked,
                                                   make_utterances(experiment.dataset(), spec, export_opts.seed),
                                                   target == "rowwise" ? BridgeTarget::kRowwise : BridgeTarget::kColumnwise);
      std::ofstream f(export_opts.out);
      if (!f) throw DataError("cannot write '" + export_opts.out + "'");
      for (const auto& r : requests) f << r.dump() << '\n';
      spdlog::info("wrote {} request(s) to {}", requests.size(), export_opts.out);
      return 0;
    }

    if (*run) {
      auto cfg = make_config(run_opts, {1}, "off");
      const auto result = run_grid(cfg);
      for (const auto& c : result.cells)
        std::cout << c.encoder << " q=" << c.q << (c.masked ? " masked" : " visible")
                  << " mean_macro_f1=" << format_score(c.report.mean_macro_f1)
                  << " pooled_macro_f1=" << format_score(c.report.pooled_macro_f1) << '\n';
      return 0;
    }
    if (*grid) {
      auto cfg = make_config(grid_opts, {1, 3, 5, 7}, "both");
      std::cout << run_grid(cfg).summary_markdown;
      return 0;
    }
    if (*grid_utt) {
      auto cfg = make_config(utt_opts, {3}, "both");
      std::vector<UtteranceMode> modes;
      for (const auto& m : utt_opts.utterances) modes.push_back(parse_utterance_mode(m));
      if (modes.empty()) modes = all_utterance_modes();
      Experiment experiment(load_dataset_dir(cfg.dataset_dir, cfg.min_class_count), cfg.seed);
      std::cout << run_utterance_grid(experiment, cfg, modes).summary_csv;
      return 0;
    }
    if (*search) {
      auto cfg = make_config(search_opts, {1}, "off");
      if (cfg.qs.size() != 1 || cfg.masked.size() != 1) throw ConfigError("search takes a single q and masking setting");
      Experiment experiment(load_dataset_dir(cfg.dataset_dir, cfg.min_class_count), cfg.seed);
      const auto points = search_hyperparameters(experiment, cfg, cfg.encoders.front(), cfg.qs.front(),
                                                  cfg.masked.front(), search_hidden, search_lr, holdout_folds);
      std::vector<std::vector<std::string>> rows{{"hidden", "learning_rate", "holdout_macro_f1"}};
      for (const auto& p : points)
        rows.push_back({std::to_string(p.hidden), format_score(p.learning_rate, 6), format_score(p.holdout_macro_f1)});
      std::cout << format_csv(rows);
      if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        std::ofstream(cfg.out_dir / "search.csv") << format_csv(rows);
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const MissingVectorsError& e) {
    spdlog::error("missing precomputed vectors: {}", e.what());
    return kExitMissingVectors;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
