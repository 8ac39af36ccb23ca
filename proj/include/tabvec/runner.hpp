#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <unordered_set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabvec/corpus.hpp"
#include "tabvec/embedding_store.hpp"
#include "tabvec/encoders.hpp"
#include "tabvec/eval.hpp"
#include "tabvec/mlp.hpp"

namespace tabvec {

enum class EncoderKind { kTfIdf, kWordVec, kPooledRows, kPooledColumns };

/// Parsed `--encoder` id: tfidf | wordvec:<.vec> | pooled-rows:<jsonl> | pooled-cols:<jsonl>.
struct EncoderSpec {
  EncoderKind kind = EncoderKind::kTfIdf;
  std::filesystem::path resource;
  std::string id;
};

/// Throws ConfigError on an unknown id or a missing resource path.
EncoderSpec parse_encoder_id(const std::string& id);

enum class UtteranceMode { kEmpty, kRandom10, kConstant, kCorrectClass, kWrongClass };

struct UtteranceSpec {
  UtteranceMode mode = UtteranceMode::kEmpty;
  std::string constant_text = "Thing";
};

std::string_view to_string(UtteranceMode mode);
UtteranceMode parse_utterance_mode(std::string_view text);
const std::vector<UtteranceMode>& all_utterance_modes();

/// Table id -> utterance. Empty mode gives " "; random10 gives unique
/// lowercase 10-character strings; wrong-class maps each class to the class
/// a seeded cyclic shift s in [1, k) away in the sorted inventory.
/// Throws ConfigError for wrong-class with a single class.
std::map<std::string, std::string> make_utterances(const LabeledDataset& dataset,
                                                   const UtteranceSpec& spec, std::uint64_t seed);

/// The cyclic shift used by wrong-class utterances.
std::size_t wrong_class_shift(std::size_t class_count, std::uint64_t seed);

struct RunConfig {
  std::filesystem::path dataset_dir;
  std::vector<std::string> encoders = {"tfidf"};
  std::vector<int> qs = {1, 3, 5, 7};
  std::vector<bool> masked = {false, true};
  UtteranceSpec utterance;
  int k_folds = 20;
  std::uint64_t seed = 0;
  int min_class_count = 2;
  std::filesystem::path out_dir;
  int workers = 1;
  std::size_t vocab_limit = 0;
  bool transductive_tfidf = false;
  MacroLabels macro_labels = MacroLabels::kObserved;
  /// Summaries report pooled-prediction macro-F1 instead of the fold mean.
  bool pooled_score = false;
  TrainConfig train;

  /// Throws ConfigError on unusable values.
  void validate() const;
  nlohmann::json to_json() const;
};

/// A loaded dataset with its rows shuffled once for the whole suite.
class Experiment {
 public:
  Experiment(LabeledDataset dataset, std::uint64_t shuffle_seed);

  const LabeledDataset& dataset() const { return dataset_; }
  const std::vector<Table>& shuffled() const { return shuffled_; }
  std::uint64_t shuffle_seed() const { return shuffle_seed_; }

  /// Sampled (and optionally masked) tables in dataset order.
  std::vector<SampledTable> sample(int q, bool masked) const;

  /// Every token appearing in the corpus, including the mask token.
  std::unordered_set<std::string> vocabulary() const;

 private:
  LabeledDataset dataset_;
  std::uint64_t shuffle_seed_;
  std::vector<Table> shuffled_;
};

/// Loads and caches lexicons and precomputed stores referenced by encoder ids.
class ResourceCache {
 public:
  ResourceCache(const Experiment& experiment, std::size_t vocab_limit)
      : experiment_(experiment), vocab_limit_(vocab_limit) {}

  std::shared_ptr<const EmbeddingLexicon> lexicon(const std::filesystem::path& path);
  std::shared_ptr<const PrecomputedStore> store(const std::filesystem::path& path);

  /// Encoder instance for one grid cell.
  std::unique_ptr<TableEncoder> make_encoder(const EncoderSpec& spec,
                                             const std::map<std::string, std::string>& utterances);

 private:
  const Experiment& experiment_;
  std::size_t vocab_limit_;
  std::map<std::filesystem::path, std::shared_ptr<const EmbeddingLexicon>> lexicons_;
  std::map<std::filesystem::path, std::shared_ptr<const PrecomputedStore>> stores_;
};

struct GridCell {
  std::string encoder;
  int q = 1;
  bool masked = false;
  UtteranceMode utterance = UtteranceMode::kEmpty;
  EvalReport report;
  std::filesystem::path report_dir;
  /// The number that goes into summaries.
  double score = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::string summary_csv;
  std::string summary_markdown;
};

/// Runs one cross-validated cell.
EvalReport run_cell(const Experiment& experiment, ResourceCache& cache, const RunConfig& config,
                    const std::string& encoder_id, int q, bool masked, const UtteranceSpec& utterance);

/// Encoders x q x masked, one report per cell. When `config.out_dir` is set,
/// every report plus summary.csv, summary.md and manifest.json is written.
GridResult run_grid(const RunConfig& config);
GridResult run_grid(const Experiment& experiment, const RunConfig& config);

/// Utterance ablation: every mode x masked setting at each q.
/// Writes utterance_scores.csv when `config.out_dir` is set.
GridResult run_utterance_grid(const Experiment& experiment, const RunConfig& config,
                              const std::vector<UtteranceMode>& modes);

/// Summary CSV: one row per encoder, score columns per (masked, q).
std::string summary_csv(const std::vector<GridCell>& cells);
std::string summary_markdown(const std::vector<GridCell>& cells);
std::string utterance_csv(const std::vector<GridCell>& cells);

enum class BridgeTarget { kRowwise, kColumnwise };
std::string_view to_string(BridgeTarget target);

/// One JSON request per table x q x masked, carrying the sampled rows, the
/// (masked) header and the utterance.
std::vector<nlohmann::json> export_bridge_requests(const Experiment& experiment,
                                                   const std::vector<int>& qs,
                                                   const std::vector<bool>& masked,
                                                   const std::map<std::string, std::string>& utterances,
                                                   BridgeTarget target);

struct SearchPoint {
  int hidden = 0;
  double learning_rate = 0.0;
  double holdout_macro_f1 = 0.0;
};

/// Hyperparameter search on a stratified hold-out split: fold 0 of a
/// `holdout_folds`-fold plan is the validation set, the rest trains.
std::vector<SearchPoint> search_hyperparameters(const Experiment& experiment, const RunConfig& config,
                                                const std::string& encoder_id, int q, bool masked,
                                                const std::vector<int>& hidden_sizes,
                                                const std::vector<double>& learning_rates,
                                                int holdout_folds);

}  // namespace tabvec
