#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "tabvec/encoders.hpp"
#include "tabvec/mlp.hpp"

namespace tabvec {

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
  /// Classes with fewer members than k; they miss some test folds.
  std::vector<int> understratified_classes;
};

/// Stratified K-fold plan. Each class's members are shuffled and dealt
/// round-robin across folds, continuing from where the previous class left
/// off, so per-class and total fold sizes differ by at most one.
/// Throws ConfigError when k < 2 or k exceeds the number of labels.
FoldPlan stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

/// Which classes enter the macro average.
enum class MacroLabels {
  /// Classes present in y_true or y_pred (mainstream metric default).
  kObserved,
  /// Every class in the inventory; absent classes score 0.
  kInventory,
};

/// Unweighted mean of per-class F1 = 2PR / (P + R), with F1 = 0 when
/// P + R = 0. Labels must lie in [0, classes). Throws DataError on a length
/// mismatch or out-of-range label.
double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, int classes,
                MacroLabels mode = MacroLabels::kObserved);

/// counts(i, j) = #(true = i and pred = j).
Eigen::MatrixXi confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 int classes);

/// Divides each row by its sum; all-zero rows stay zero.
Eigen::MatrixXd row_normalize(const Eigen::MatrixXi& counts);

/// Class indices by descending instance count, ties by index.
std::vector<int> order_by_frequency(std::span<const int> labels, int classes);

/// Trains on (train_x, train_y) and predicts one label per column of test_x.
using Classifier = std::function<std::vector<int>(const FeatureMatrix& train_x, std::span<const int> train_y,
                                                  int classes, const FeatureMatrix& test_x,
                                                  std::uint64_t fold_seed)>;

Classifier mlp_classifier(TrainConfig cfg);

struct CvOptions {
  int k = 20;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Fit corpus-dependent encoder state on all tables instead of the
  /// training split.
  bool transductive = false;
  MacroLabels macro_labels = MacroLabels::kObserved;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<double> per_fold_macro_f1;
  double mean_macro_f1 = 0.0;
  /// macro-F1 of all test predictions pooled over folds.
  double pooled_macro_f1 = 0.0;
  /// Raw counts summed over folds, inventory order.
  Eigen::MatrixXi confusion;
  /// Display order for the confusion matrix (descending class size).
  std::vector<int> class_order;
  nlohmann::json manifest = nlohmann::json::object();

  Eigen::MatrixXd confusion_row_normalized() const { return row_normalize(confusion); }
};

/// Stratified cross-validation of encoder + classifier. Per fold the
/// encoder is fitted on the training tables (unless transductive), both
/// splits are encoded and the classifier is trained and evaluated.
EvalReport run_cv(std::span<const SampledTable> tables, std::span<const int> labels,
                  const std::vector<std::string>& class_names, const TableEncoder& encoder,
                  const Classifier& classifier, const CvOptions& options);

nlohmann::json to_json(const EvalReport& report);

/// Writes report.json, scores.csv (per-fold macro-F1) and confusion.csv
/// (row-normalized, frequency-ordered) into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

/// Fixed-point rendering used in every CSV and summary table.
std::string format_score(double value, int decimals = 4);

}  // namespace tabvec
