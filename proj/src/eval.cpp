#include "tabvec/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "tabvec/corpus.hpp"
#include "tabvec/error.hpp"
#include "tabvec/random.hpp"

namespace tabvec {

namespace {

void check_labels(std::span<const int> labels, int classes, const char* what) {
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw DataError(std::string(what) + ": label " + std::to_string(y) + " outside [0, " +
                      std::to_string(classes) + ")");
}

template <typename T>
std::vector<T> gather(std::span<const T> items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

// Runs job(i) for i in [0, n) on up to `workers` threads; rethrows the
// first failure.
template <typename Job>
void parallel_for(std::size_t n, int workers, Job job) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

FoldPlan stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified folds: K must be >= 2");
  if (static_cast<std::size_t>(k) > labels.size())
    throw ConfigError("stratified folds: K = " + std::to_string(k) + " exceeds the " +
                      std::to_string(labels.size()) + " available labels");
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  check_labels(labels, classes, "stratified folds");

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(k));
  std::size_t dealer = 0;
  for (int c = 0; c < classes; ++c) {
    auto& m = members[c];
    if (m.empty()) continue;
    if (m.size() < static_cast<std::size_t>(k)) plan.understratified_classes.push_back(c);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    fisher_yates(m, rng);
    for (const std::size_t i : m) {
      plan.folds[dealer].test.push_back(i);
      dealer = (dealer + 1) % static_cast<std::size_t>(k);
    }
  }
  for (auto& fold : plan.folds) {
    std::sort(fold.test.begin(), fold.test.end());
    std::vector<bool> in_test(labels.size(), false);
    for (auto i : fold.test) in_test[i] = true;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!in_test[i]) fold.train.push_back(i);
  }
  return plan;
}

double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, int classes, MacroLabels mode) {
  if (y_true.size() != y_pred.size())
    throw DataError("macro_f1: " + std::to_string(y_true.size()) + " true labels vs " +
                    std::to_string(y_pred.size()) + " predictions");
  check_labels(y_true, classes, "macro_f1");
  check_labels(y_pred, classes, "macro_f1");
  std::vector<double> tp(static_cast<std::size_t>(classes)), fp(tp), fn(tp);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == y_pred[i]) {
      tp[y_true[i]] += 1;
    } else {
      fp[y_pred[i]] += 1;
      fn[y_true[i]] += 1;
    }
  }
  double sum = 0;
  int counted = 0;
  for (int c = 0; c < classes; ++c) {
    const bool observed = tp[c] + fp[c] + fn[c] > 0;
    if (mode == MacroLabels::kObserved && !observed) continue;
    ++counted;
    // 2PR / (P + R) == 2TP / (2TP + FP + FN); zero when undefined.
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) sum += 2 * tp[c] / denom;
  }
  return counted ? sum / counted : 0.0;
}

Eigen::MatrixXi confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int classes) {
  if (y_true.size() != y_pred.size()) throw DataError("confusion_matrix: length mismatch");
  check_labels(y_true, classes, "confusion_matrix");
  check_labels(y_pred, classes, "confusion_matrix");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) ++counts(y_true[i], y_pred[i]);
  return counts;
}

Eigen::MatrixXd row_normalize(const Eigen::MatrixXi& counts) {
  Eigen::MatrixXd out = counts.cast<double>();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double s = out.row(r).sum();
    if (s > 0) out.row(r) /= s;
  }
  return out;
}

std::vector<int> order_by_frequency(std::span<const int> labels, int classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes));
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  std::vector<int> order(static_cast<std::size_t>(classes));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return counts[a] > counts[b]; });
  return order;
}

Classifier mlp_classifier(TrainConfig cfg) {
  cfg.validate();
  return [cfg](const FeatureMatrix& train_x, std::span<const int> train_y, int classes, const FeatureMatrix& test_x,
               std::uint64_t fold_seed) {
    TrainConfig local = cfg;
    local.seed = fold_seed;
    const auto result = train<double>(train_x, train_y, classes, local);
    return predict_batch(result.params, test_x);
  };
}

EvalReport run_cv(std::span<const SampledTable> tables, std::span<const int> labels,
                  const std::vector<std::string>& class_names, const TableEncoder& encoder,
                  const Classifier& classifier, const CvOptions& options) {
  if (tables.size() != labels.size()) throw DataError("run_cv: one label per table required");
  const int classes = static_cast<int>(class_names.size());
  check_labels(labels, classes, "run_cv");
  const FoldPlan plan = stratified_folds(labels, options.k, options.seed);
  if (!plan.understratified_classes.empty()) {
    std::string names;
    for (int c : plan.understratified_classes) names += (names.empty() ? "" : ", ") + class_names[c];
    spdlog::warn("{} class(es) have fewer than K={} members and miss some test folds: {}",
                 plan.understratified_classes.size(), options.k, names);
  }

  // Encoders without fold-dependent state are applied once up front.
  std::shared_ptr<const TableEncoder> shared;
  if (!encoder.needs_fit()) {
    shared = encoder.fitted(tables);
  } else if (options.transductive) {
    shared = encoder.fitted(tables);
  }
  FeatureMatrix all_x;
  if (shared) all_x = encode_dataset(*shared, tables);

  struct FoldOutcome {
    std::vector<int> predictions;
    double macro_f1 = 0;
    Eigen::Index dim = 0;
  };
  std::vector<FoldOutcome> outcomes(plan.folds.size());

  parallel_for(plan.folds.size(), options.workers, [&](std::size_t f) {
    const Fold& fold = plan.folds[f];
    FeatureMatrix train_x, test_x;
    if (shared) {
      train_x = all_x(Eigen::all, fold.train);
      test_x = all_x(Eigen::all, fold.test);
    } else {
      const auto train_tables = gather(tables, fold.train);
      const auto fitted = encoder.fitted(train_tables);
      train_x = encode_dataset(*fitted, train_tables);
      test_x = encode_dataset(*fitted, gather(tables, fold.test));
    }
    const auto train_y = gather(labels, fold.train);
    const auto test_y = gather(labels, fold.test);
    auto pred = classifier(train_x, train_y, classes, test_x, mix_seed(options.seed, 0x666f6c64 + f));
    if (pred.size() != test_y.size()) throw Error("classifier returned the wrong number of predictions");
    outcomes[f].macro_f1 = macro_f1(test_y, pred, classes, options.macro_labels);
    outcomes[f].predictions = std::move(pred);
    outcomes[f].dim = train_x.rows();
  });

  EvalReport report;
  report.class_names = class_names;
  report.confusion = Eigen::MatrixXi::Zero(classes, classes);
  std::vector<int> pooled_true, pooled_pred;
  nlohmann::json fold_info = nlohmann::json::array();
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto test_y = gather(labels, plan.folds[f].test);
    report.per_fold_macro_f1.push_back(outcomes[f].macro_f1);
    report.confusion += confusion_matrix(test_y, outcomes[f].predictions, classes);
    pooled_true.insert(pooled_true.end(), test_y.begin(), test_y.end());
    pooled_pred.insert(pooled_pred.end(), outcomes[f].predictions.begin(), outcomes[f].predictions.end());
    fold_info.push_back({{"train", plan.folds[f].train.size()},
                         {"test", plan.folds[f].test.size()},
                         {"feature_dim", outcomes[f].dim}});
  }
  report.mean_macro_f1 = std::accumulate(report.per_fold_macro_f1.begin(), report.per_fold_macro_f1.end(), 0.0) /
                         static_cast<double>(report.per_fold_macro_f1.size());
  report.pooled_macro_f1 = macro_f1(pooled_true, pooled_pred, classes, options.macro_labels);
  report.class_order = order_by_frequency(labels, classes);

  nlohmann::json understratified = nlohmann::json::array();
  for (int c : plan.understratified_classes) understratified.push_back(class_names[c]);
  report.manifest = {{"encoder", encoder.name()},
                     {"k_folds", options.k},
                     {"fold_seed", options.seed},
                     {"encoder_fit", encoder.needs_fit() ? (options.transductive ? "transductive" : "train-only")
                                                         : "frozen"},
                     {"macro_average", options.macro_labels == MacroLabels::kObserved ? "observed-labels"
                                                                                      : "all-classes"},
                     {"score_aggregation", "mean-of-folds"},
                     {"tables", tables.size()},
                     {"classes", classes},
                     {"understratified_classes", understratified},
                     {"folds", fold_info}};
  const auto diag = encoder.diagnostics(tables);
  if (!diag.empty()) report.manifest["encoder_diagnostics"] = diag;
  return report;
}

std::string format_score(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json confusion = nlohmann::json::array();
  for (Eigen::Index r = 0; r < report.confusion.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < report.confusion.cols(); ++c) row.push_back(report.confusion(r, c));
    confusion.push_back(std::move(row));
  }
  return {{"classes", report.class_names},
          {"class_order", report.class_order},
          {"per_fold_macro_f1", report.per_fold_macro_f1},
          {"mean_macro_f1", report.mean_macro_f1},
          {"pooled_macro_f1", report.pooled_macro_f1},
          {"confusion", confusion},
          {"manifest", report.manifest}};
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    out << to_json(report).dump(2) << '\n';
  }
  {
    std::vector<std::vector<std::string>> rows{{"fold", "macro_f1"}};
    for (std::size_t f = 0; f < report.per_fold_macro_f1.size(); ++f)
      rows.push_back({std::to_string(f), format_score(report.per_fold_macro_f1[f], 6)});
    rows.push_back({"mean", format_score(report.mean_macro_f1, 6)});
    std::ofstream out(dir / "scores.csv");
    out << format_csv(rows);
  }
  {
    const Eigen::MatrixXd norm = report.confusion_row_normalized();
    std::vector<std::vector<std::string>> rows;
    auto& head = rows.emplace_back(std::vector<std::string>{"true\\predicted"});
    for (int c : report.class_order) head.push_back(report.class_names[c]);
    for (int r : report.class_order) {
      auto& row = rows.emplace_back(std::vector<std::string>{report.class_names[r]});
      for (int c : report.class_order) row.push_back(format_score(norm(r, c), 6));
    }
    std::ofstream out(dir / "confusion.csv");
    out << format_csv(rows);
  }
}

}  // namespace tabvec
