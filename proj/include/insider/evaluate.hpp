#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "insider/dataset.hpp"
#include "insider/forest.hpp"

namespace insider {

// Lawful is the positive class throughout.
struct ConfusionMatrix {
  std::int64_t tp = 0;  // lawful predicted lawful
  std::int64_t fn = 0;  // lawful predicted unlawful
  std::int64_t fp = 0;  // unlawful predicted lawful
  std::int64_t tn = 0;  // unlawful predicted unlawful

  std::int64_t positives() const { return tp + fn; }
  std::int64_t negatives() const { return fp + tn; }
  std::int64_t total() const { return tp + fn + fp + tn; }
};

ConfusionMatrix confusion_matrix(const std::vector<Label>& y_true,
                                 const std::vector<Label>& y_pred);

// Rates in [0,1]; nullopt marks an undefined (zero-denominator) rate.
struct MetricsReport {
  std::optional<double> tpr, fpr, tnr, fnr, acc, pre;
  std::optional<double> auc;
  std::optional<double> aucpr;
};

MetricsReport metrics(const ConfusionMatrix& cm);

// P(random Unlawful row outranks a random Lawful row), ties counted 0.5.
// Scores are unlawful-vote fractions. Throws SingleClass.
double roc_auc(const std::vector<Label>& y_true,
               const std::vector<double>& scores);

// Area under precision-recall with Unlawful as the detection class, step-wise
// over descending score thresholds. Throws NoPositiveClass.
double pr_auc(const std::vector<Label>& y_true,
              const std::vector<double>& scores);

// k disjoint folds covering 0..n-1, sizes within one of each other, shuffled
// deterministically by seed. Throws BadK.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                  std::uint64_t seed);

enum class Criterion : std::uint8_t { Accuracy, Auc };

struct SearchSpace {
  int ntrees_min = 100, ntrees_max = 1030;
  double mtry_min = 0.35, mtry_max = 0.95;
  int depth_min = 2, depth_max = 18;
  double rate_min = 0.5, rate_max = 1.0;
  int n_iterations = 5;
  int k_folds = 5;

  void validate() const;  // throws ConfigError / BadK
};

struct SearchResult {
  HyperParams best;
  double best_score = 0.0;
  int best_iteration = -1;
  std::size_t failed_draws = 0;
};

// Uniform draws over the space, each scored by mean k-fold validation
// accuracy (or AUC); ties keep the earlier draw. A draw whose fold fit fails
// is logged and skipped.
SearchResult random_search(const SearchSpace& space, const Dataset& train,
                           std::uint64_t seed,
                           Criterion criterion = Criterion::Accuracy,
                           unsigned workers = 0);

struct PcaMode {
  enum class Kind : std::uint8_t { Off, EvrThreshold, FixedK } kind = Kind::Off;
  double evr_target = 0.9476;
  std::size_t fixed_k = 0;

  static PcaMode off() { return {}; }
  static PcaMode evr(double target);
  static PcaMode fixed(std::size_t k);
  static PcaMode parse(const std::string& text);  // off | evr=<r> | k=<int>
  std::string to_string() const;
};

struct SyntheticSpec {
  std::size_t m = 25;
  std::size_t n_informative = 5;
  double class_separation = 1.0;
  std::size_t correlated_groups = 0;
  double lawful_pool_factor = 3.0;  // lawful pool size / (n_transactions/2)
};

struct ExperimentConfig {
  // exactly one source
  std::optional<std::string> csv_path;
  std::optional<SyntheticSpec> synthetic;

  std::size_t n_transactions = 320;
  std::vector<std::string> feature_subset;  // empty = all columns
  PcaMode pca;
  SearchSpace space;
  int reps = 1;
  std::uint64_t master_seed = 0;
  Criterion criterion = Criterion::Accuracy;
  unsigned workers = 0;

  void validate() const;  // throws ConfigError
};

ExperimentConfig experiment_config_from_json_text(const std::string& text);

struct RepResult {
  int rep = 0;
  std::uint64_t seed = 0;
  HyperParams params;
  ConfusionMatrix cm;
  MetricsReport report;
  double oob = 0.0;
  bool failed = false;
  std::string error;
};

struct ExperimentResult {
  std::vector<RepResult> reps;   // rep-index order, including failures
  std::size_t failures = 0;

  std::string per_rep_csv() const;
  // mean/std (population) per metric plus the modal chosen parameters
  std::string aggregate_json() const;
  double mean_metric(double RepResult::*field) const;
  std::vector<double> metric_values(const char* name) const;  // skips failures
};

// The repetition harness: per rep, resample the lawful side against the fixed
// unlawful side, split 0.8/0.2, normalize on train, optional PCA, tune, fit,
// score on test. Bit-reproducible for a fixed master seed at any worker count.
ExperimentResult run_experiments(const ExperimentConfig& config);

// The pool the harness resamples from: the fixed unlawful rows plus the
// lawful pool (first = unlawful, second = lawful).
std::pair<Dataset, Dataset> build_experiment_pool(const ExperimentConfig& config);

}  // namespace insider
