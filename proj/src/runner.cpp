#include "tabvec/runner.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "tabvec/error.hpp"
#include "tabvec/random.hpp"

namespace tabvec {

namespace fs = std::filesystem;

EncoderSpec parse_encoder_id(const std::string& id) {
  EncoderSpec spec;
  spec.id = id;
  if (id == "tfidf") {
    spec.kind = EncoderKind::kTfIdf;
    return spec;
  }
  const auto colon = id.find(':');
  const std::string kind = id.substr(0, colon);
  if (colon == std::string::npos || colon + 1 == id.size()) {
    if (kind == "wordvec" || kind == "pooled-rows" || kind == "pooled-cols")
      throw ConfigError("encoder '" + id + "' needs a resource path, e.g. " + kind + ":<file>");
    throw ConfigError("unknown encoder id '" + id + "' (expected tfidf, wordvec:<vec>, pooled-rows:<jsonl>, pooled-cols:<jsonl>)");
  }
  spec.resource = id.substr(colon + 1);
  if (kind == "wordvec")
    spec.kind = EncoderKind::kWordVec;
  else if (kind == "pooled-rows")
    spec.kind = EncoderKind::kPooledRows;
  else if (kind == "pooled-cols")
    spec.kind = EncoderKind::kPooledColumns;
  else
    throw ConfigError("unknown encoder id '" + id + "' (expected tfidf, wordvec:<vec>, pooled-rows:<jsonl>, pooled-cols:<jsonl>)");
  return spec;
}

std::string_view to_string(UtteranceMode mode) {
  switch (mode) {
    case UtteranceMode::kEmpty: return "empty";
    case UtteranceMode::kRandom10: return "random10";
    case UtteranceMode::kConstant: return "constant";
    case UtteranceMode::kCorrectClass: return "correct-class";
    case UtteranceMode::kWrongClass: return "wrong-class";
  }
  return "?";
}

UtteranceMode parse_utterance_mode(std::string_view text) {
  for (const auto mode : all_utterance_modes())
    if (to_string(mode) == text) return mode;
  throw ConfigError("unknown utterance mode '" + std::string(text) +
                    "' (expected empty, random10, constant, correct-class, wrong-class)");
}

const std::vector<UtteranceMode>& all_utterance_modes() {
  static const std::vector<UtteranceMode> modes = {UtteranceMode::kEmpty, UtteranceMode::kRandom10,
                                                   UtteranceMode::kConstant, UtteranceMode::kCorrectClass,
                                                   UtteranceMode::kWrongClass};
  return modes;
}

std::size_t wrong_class_shift(std::size_t class_count, std::uint64_t seed) {
  if (class_count < 2) throw ConfigError("wrong-class utterances need at least two classes");
  Rng rng(mix_seed(seed, 0x7368696674));
  return 1 + static_cast<std::size_t>(uniform_index(rng, class_count - 1));
}

std::map<std::string, std::string> make_utterances(const LabeledDataset& dataset, const UtteranceSpec& spec,
                                                   std::uint64_t seed) {
  std::map<std::string, std::string> out;
  const auto& entries = dataset.entries();
  switch (spec.mode) {
    case UtteranceMode::kEmpty:
      for (const auto& e : entries) out[e.table.id()] = " ";
      break;
    case UtteranceMode::kConstant:
      for (const auto& e : entries) out[e.table.id()] = spec.constant_text;
      break;
    case UtteranceMode::kCorrectClass:
      for (const auto& e : entries) out[e.table.id()] = e.label.name;
      break;
    case UtteranceMode::kWrongClass: {
      const auto k = dataset.class_count();
      const auto shift = wrong_class_shift(k, seed);
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto c = static_cast<std::size_t>(dataset.label_indices()[i]);
        out[entries[i].table.id()] = dataset.classes()[(c + shift) % k];
      }
      break;
    }
    case UtteranceMode::kRandom10: {
      std::set<std::string> used;
      for (const auto& e : entries) {
        Rng rng(mix_seed(seed, stable_hash(e.table.id())));
        std::string s;
        do {
          s.clear();
          for (int i = 0; i < 10; ++i) s.push_back(static_cast<char>('a' + uniform_index(rng, 26)));
        } while (!used.insert(s).second);
        out[e.table.id()] = s;
      }
      break;
    }
  }
  return out;
}

void RunConfig::validate() const {
  if (encoders.empty()) throw ConfigError("no encoder given");
  for (const auto& e : encoders) {
    const auto spec = parse_encoder_id(e);
    if (spec.kind != EncoderKind::kTfIdf && !fs::exists(spec.resource))
      throw ConfigError("encoder '" + e + "': file '" + spec.resource.string() + "' does not exist");
  }
  if (qs.empty()) throw ConfigError("no q values given");
  for (int q : qs)
    if (q < 1) throw ConfigError("q values must be positive");
  if (masked.empty()) throw ConfigError("no masking setting given");
  if (k_folds < 2) throw ConfigError("--k-folds must be >= 2");
  if (min_class_count < 1) throw ConfigError("min class count must be >= 1");
  if (workers < 1) throw ConfigError("--workers must be >= 1");
  train.validate();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json masked_json = nlohmann::json::array();
  for (bool m : masked) masked_json.push_back(m);
  return {{"dataset", dataset_dir.string()},
          {"encoders", encoders},
          {"q", qs},
          {"masked", masked_json},
          {"utterance", {{"mode", to_string(utterance.mode)}, {"constant_text", utterance.constant_text}}},
          {"k_folds", k_folds},
          {"seed", seed},
          {"min_class_count", min_class_count},
          {"vocab_limit", vocab_limit},
          {"tfidf", {{"idf", "ln((1+n)/(1+df))+1"}, {"tf", "raw counts"}, {"norm", "l2"},
                     {"fit", transductive_tfidf ? "transductive" : "train-only"}}},
          {"macro_average", macro_labels == MacroLabels::kObserved ? "observed-labels" : "all-classes"},
          {"score", pooled_score ? "pooled" : "fold-mean"},
          {"wordvec", {{"pooling", "mean over token occurrences"}, {"empty_side", "zero vector"}}},
          {"tokenizer", "lowercase ascii, split on non-alphanumeric runs, [UNK] -> unk"},
          {"mlp",
           {{"hidden", train.hidden},
            {"activation", "tanh"},
            {"optimizer", "adam"},
            {"learning_rate", train.learning_rate},
            {"beta1", train.beta1},
            {"beta2", train.beta2},
            {"epsilon", train.epsilon},
            {"batch_size", train.batch_size},
            {"max_epochs", train.max_epochs},
            {"patience", train.patience},
            {"tolerance", train.tolerance},
            {"init", "glorot-uniform, zero bias"},
            {"weight_decay", 0}}}};
}

Experiment::Experiment(LabeledDataset dataset, std::uint64_t shuffle_seed)
    : dataset_(std::move(dataset)), shuffle_seed_(shuffle_seed) {
  shuffled_.reserve(dataset_.size());
  for (const auto& e : dataset_.entries()) shuffled_.push_back(shuffle_rows(e.table, shuffle_seed_));
}

std::vector<SampledTable> Experiment::sample(int q, bool masked) const {
  std::vector<SampledTable> out;
  out.reserve(shuffled_.size());
  for (const auto& t : shuffled_) {
    auto st = sample_rows(t, q);
    out.push_back(masked ? mask_columns(st) : std::move(st));
  }
  return out;
}

std::unordered_set<std::string> Experiment::vocabulary() const {
  std::unordered_set<std::string> vocab{std::string(kMaskToken)};
  for (const auto& e : dataset_.entries())
    for (const auto& row : e.table.matrix())
      for (const auto& cell : row) vocab.insert(cell.tokens().begin(), cell.tokens().end());
  return vocab;
}

std::shared_ptr<const EmbeddingLexicon> ResourceCache::lexicon(const fs::path& path) {
  if (auto it = lexicons_.find(path); it != lexicons_.end()) return it->second;
  const auto vocab = experiment_.vocabulary();
  VecLoadOptions options;
  options.vocab_limit = vocab_limit_;
  options.restrict_to = &vocab;
  auto lex = std::make_shared<const EmbeddingLexicon>(load_vec_file(path, options));
  lexicons_.emplace(path, lex);
  return lex;
}

std::shared_ptr<const PrecomputedStore> ResourceCache::store(const fs::path& path) {
  if (auto it = stores_.find(path); it != stores_.end()) return it->second;
  auto store = std::make_shared<const PrecomputedStore>(load_precomputed(path));
  stores_.emplace(path, store);
  return store;
}

std::unique_ptr<TableEncoder> ResourceCache::make_encoder(const EncoderSpec& spec,
                                                          const std::map<std::string, std::string>& utterances) {
  switch (spec.kind) {
    case EncoderKind::kTfIdf:
      return std::make_unique<TfIdfEncoder>();
    case EncoderKind::kWordVec:
      return std::make_unique<WordVectorEncoder>(lexicon(spec.resource));
    case EncoderKind::kPooledRows:
      return std::make_unique<PooledEncoder>(store(spec.resource), Granularity::kRow, utterances, spec.id);
    case EncoderKind::kPooledColumns:
      return std::make_unique<PooledEncoder>(store(spec.resource), Granularity::kColumn, utterances, spec.id);
  }
  throw ConfigError("unhandled encoder kind");
}

EvalReport run_cell(const Experiment& experiment, ResourceCache& cache, const RunConfig& config,
                    const std::string& encoder_id, int q, bool masked, const UtteranceSpec& utterance) {
  const auto spec = parse_encoder_id(encoder_id);
  const auto utterances = make_utterances(experiment.dataset(), utterance, config.seed);
  const auto encoder = cache.make_encoder(spec, utterances);
  const auto tables = experiment.sample(q, masked);

  CvOptions options;
  options.k = config.k_folds;
  options.seed = config.seed;
  options.workers = config.workers;
  options.transductive = config.transductive_tfidf;
  options.macro_labels = config.macro_labels;

  const auto& labels = experiment.dataset().label_indices();
  EvalReport report;
  try {
    report = run_cv(tables, labels, experiment.dataset().classes(), *encoder, mlp_classifier(config.train), options);
  } catch (const MissingVectorsError& e) {
    const char* model = spec.kind == EncoderKind::kPooledRows ? "rowwise" : "columnwise";
    throw MissingVectorsError(std::string(e.what()) + "\n  export the requests with `tabvec export-requests --target " +
                              model + " ...` and run `bridge run --requests <requests.jsonl> --out " +
                              spec.resource.string() + " --model " + model + "`");
  }
  report.manifest["q"] = q;
  report.manifest["masked"] = masked;
  report.manifest["utterance"] = to_string(utterance.mode);
  report.manifest["shuffle_seed"] = experiment.shuffle_seed();
  report.manifest["run"] = config.to_json();
  return report;
}

namespace {

std::string encoder_slug(const std::string& id) {
  const auto spec = parse_encoder_id(id);
  switch (spec.kind) {
    case EncoderKind::kTfIdf: return "tfidf";
    case EncoderKind::kWordVec: return "wordvec-" + spec.resource.stem().string();
    case EncoderKind::kPooledRows: return "pooled-rows-" + spec.resource.stem().string();
    case EncoderKind::kPooledColumns: return "pooled-cols-" + spec.resource.stem().string();
  }
  return "encoder";
}

std::string cell_dir_name(int q, bool masked, const std::optional<UtteranceMode>& utterance) {
  std::string name = "q" + std::to_string(q) + (masked ? "-masked" : "-visible");
  if (utterance) name += "-utt-" + std::string(to_string(*utterance));
  return name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

nlohmann::json cell_index(const std::vector<GridCell>& cells, const fs::path& root) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : cells)
    out.push_back({{"encoder", c.encoder},
                   {"q", c.q},
                   {"masked", c.masked},
                   {"utterance", to_string(c.utterance)},
                   {"mean_macro_f1", c.report.mean_macro_f1},
                   {"pooled_macro_f1", c.report.pooled_macro_f1},
                   {"report", fs::relative(c.report_dir / "report.json", root).generic_string()}});
  return out;
}

template <typename T>
std::vector<T> unique_in_order(const std::vector<GridCell>& cells, T GridCell::*field) {
  std::vector<T> out;
  for (const auto& c : cells)
    if (std::find(out.begin(), out.end(), c.*field) == out.end()) out.push_back(c.*field);
  return out;
}

const GridCell* find_cell(const std::vector<GridCell>& cells, const std::string& encoder, int q, bool masked) {
  for (const auto& c : cells)
    if (c.encoder == encoder && c.q == q && c.masked == masked) return &c;
  return nullptr;
}

}  // namespace

GridResult run_grid(const RunConfig& config) {
  config.validate();
  Experiment experiment(load_dataset_dir(config.dataset_dir, config.min_class_count), config.seed);
  return run_grid(experiment, config);
}

GridResult run_grid(const Experiment& experiment, const RunConfig& config) {
  config.validate();
  ResourceCache cache(experiment, config.vocab_limit);
  GridResult result;
  for (const auto& encoder : config.encoders) {
    for (const bool masked : config.masked) {
      for (const int q : config.qs) {
        spdlog::info("cell: encoder={} q={} masked={}", encoder, q, masked);
        GridCell cell{encoder, q, masked, config.utterance.mode,
                      run_cell(experiment, cache, config, encoder, q, masked, config.utterance), {}};
        cell.score = config.pooled_score ? cell.report.pooled_macro_f1 : cell.report.mean_macro_f1;
        spdlog::info("  macro-F1 {:.4f}", cell.score);
        if (!config.out_dir.empty()) {
          cell.report_dir = config.out_dir / encoder_slug(encoder) / cell_dir_name(q, masked, std::nullopt);
          write_report(cell.report, cell.report_dir);
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }
  result.summary_csv = summary_csv(result.cells);
  result.summary_markdown = summary_markdown(result.cells);
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    write_text(config.out_dir / "summary.csv", result.summary_csv);
    write_text(config.out_dir / "summary.md", result.summary_markdown);
    nlohmann::json manifest = {{"config", config.to_json()},
                               {"tables", experiment.dataset().size()},
                               {"classes", experiment.dataset().class_count()},
                               {"cells", cell_index(result.cells, config.out_dir)}};
    write_text(config.out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

GridResult run_utterance_grid(const Experiment& experiment, const RunConfig& config,
                              const std::vector<UtteranceMode>& modes) {
  config.validate();
  ResourceCache cache(experiment, config.vocab_limit);
  GridResult result;
  for (const auto& encoder : config.encoders) {
    for (const bool masked : config.masked) {
      for (const int q : config.qs) {
        for (const auto mode : modes) {
          UtteranceSpec spec = config.utterance;
          spec.mode = mode;
          spdlog::info("cell: encoder={} q={} masked={} utterance={}", encoder, q, masked, to_string(mode));
          GridCell cell{encoder, q, masked, mode, run_cell(experiment, cache, config, encoder, q, masked, spec), {}};
          cell.score = config.pooled_score ? cell.report.pooled_macro_f1 : cell.report.mean_macro_f1;
          if (!config.out_dir.empty()) {
            cell.report_dir = config.out_dir / encoder_slug(encoder) / cell_dir_name(q, masked, mode);
            write_report(cell.report, cell.report_dir);
          }
          result.cells.push_back(std::move(cell));
        }
      }
    }
  }
  result.summary_csv = utterance_csv(result.cells);
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    write_text(config.out_dir / "utterance_scores.csv", result.summary_csv);
    nlohmann::json manifest = {{"config", config.to_json()}, {"cells", cell_index(result.cells, config.out_dir)}};
    write_text(config.out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

std::string summary_csv(const std::vector<GridCell>& cells) {
  const auto encoders = unique_in_order(cells, &GridCell::encoder);
  auto qs = unique_in_order(cells, &GridCell::q);
  std::sort(qs.begin(), qs.end());
  std::vector<std::vector<std::string>> rows;
  auto& head = rows.emplace_back(std::vector<std::string>{"encoder"});
  for (const bool masked : {false, true})
    for (int q : qs)
      if (std::any_of(cells.begin(), cells.end(), [&](const GridCell& c) { return c.masked == masked && c.q == q; }))
        head.push_back(std::string(masked ? "masked" : "visible") + "_q" + std::to_string(q));
  for (const auto& encoder : encoders) {
    auto& row = rows.emplace_back(std::vector<std::string>{encoder});
    for (const bool masked : {false, true})
      for (int q : qs) {
        if (!std::any_of(cells.begin(), cells.end(), [&](const GridCell& c) { return c.masked == masked && c.q == q; }))
          continue;
        const auto* cell = find_cell(cells, encoder, q, masked);
        row.push_back(cell ? format_score(cell->score) : "");
      }
  }
  return format_csv(rows);
}

std::string summary_markdown(const std::vector<GridCell>& cells) {
  const auto encoders = unique_in_order(cells, &GridCell::encoder);
  auto qs = unique_in_order(cells, &GridCell::q);
  std::sort(qs.begin(), qs.end());
  std::string out;
  for (const bool masked : {false, true}) {
    if (std::none_of(cells.begin(), cells.end(), [&](const GridCell& c) { return c.masked == masked; })) continue;
    out += masked ? "### Masked column names\n\n" : "### Column names\n\n";
    out += "| encoder |";
    for (int q : qs) out += " q=" + std::to_string(q) + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < qs.size(); ++i) out += "---|";
    out += "\n";
    for (const auto& encoder : encoders) {
      out += "| " + encoder + " |";
      for (int q : qs) {
        const auto* cell = find_cell(cells, encoder, q, masked);
        out += " " + (cell ? format_score(cell->score, 3) : std::string("-")) + " |";
      }
      out += "\n";
    }
    out += "\n";
  }
  return out;
}

std::string utterance_csv(const std::vector<GridCell>& cells) {
  std::vector<std::vector<std::string>> rows{{"encoder", "q", "masked", "utterance", "macro_f1"}};
  for (const auto& c : cells)
    rows.push_back({c.encoder, std::to_string(c.q), c.masked ? "masked" : "visible", std::string(to_string(c.utterance)),
                    format_score(c.score)});
  return format_csv(rows);
}

std::string_view to_string(BridgeTarget target) {
  return target == BridgeTarget::kRowwise ? "rowwise" : "columnwise";
}

std::vector<nlohmann::json> export_bridge_requests(const Experiment& experiment, const std::vector<int>& qs,
                                                   const std::vector<bool>& masked,
                                                   const std::map<std::string, std::string>& utterances,
                                                   BridgeTarget target) {
  std::vector<nlohmann::json> out;
  for (const auto& table : experiment.shuffled()) {
    for (const int q : qs) {
      for (const bool m : masked) {
        auto st = sample_rows(table, q);
        if (m) st = mask_columns(st);
        nlohmann::json header = nlohmann::json::array();
        for (const auto& cell : st.header()) header.push_back(cell.raw());
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < st.row_count(); ++i) {
          nlohmann::json row = nlohmann::json::array();
          for (const auto& cell : st.row(i)) row.push_back(cell.raw());
          rows.push_back(std::move(row));
        }
        const auto it = utterances.find(table.id());
        out.push_back({{"table_id", table.id()},
                       {"target", to_string(target)},
                       {"q", q},
                       {"masked", m},
                       {"utterance", it == utterances.end() ? std::string(" ") : it->second},
                       {"header", std::move(header)},
                       {"rows", std::move(rows)}});
      }
    }
  }
  return out;
}

std::vector<SearchPoint> search_hyperparameters(const Experiment& experiment, const RunConfig& config,
                                                const std::string& encoder_id, int q, bool masked,
                                                const std::vector<int>& hidden_sizes,
                                                const std::vector<double>& learning_rates, int holdout_folds) {
  ResourceCache cache(experiment, config.vocab_limit);
  const auto spec = parse_encoder_id(encoder_id);
  const auto encoder =
      cache.make_encoder(spec, make_utterances(experiment.dataset(), config.utterance, config.seed));
  const auto tables = experiment.sample(q, masked);
  const auto& labels = experiment.dataset().label_indices();
  const auto plan = stratified_folds(labels, holdout_folds, config.seed);
  const auto& fold = plan.folds.front();

  std::vector<SampledTable> train_tables, test_tables;
  std::vector<int> train_y, test_y;
  for (auto i : fold.train) {
    train_tables.push_back(tables[i]);
    train_y.push_back(labels[i]);
  }
  for (auto i : fold.test) {
    test_tables.push_back(tables[i]);
    test_y.push_back(labels[i]);
  }
  const auto fitted = encoder->fitted(train_tables);
  const FeatureMatrix train_x = encode_dataset(*fitted, train_tables);
  const FeatureMatrix test_x = encode_dataset(*fitted, test_tables);

  std::vector<SearchPoint> points;
  for (const int hidden : hidden_sizes) {
    for (const double lr : learning_rates) {
      TrainConfig cfg = config.train;
      cfg.hidden = hidden;
      cfg.learning_rate = lr;
      cfg.seed = config.seed;
      const auto trained = train<double>(train_x, train_y, static_cast<int>(experiment.dataset().class_count()), cfg);
      const auto pred = predict_batch(trained.params, test_x);
      points.push_back({hidden, lr, macro_f1(test_y, pred, static_cast<int>(experiment.dataset().class_count()))});
      spdlog::info("search: hidden={} lr={} holdout macro-F1 {:.4f}", hidden, lr, points.back().holdout_macro_f1);
    }
  }
  return points;
}

}  // namespace tabvec
