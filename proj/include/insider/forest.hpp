#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "insider/dataset.hpp"
#include "insider/matrix.hpp"

namespace insider {

inline constexpr int kUnlimitedDepth = -1;

struct HyperParams {
  int ntrees = 100;
  // Fraction of features drawn as split candidates per node; unset means the
  // sqrt(m)/m default. Resolved count is always >= 1.
  std::optional<double> mtry_fraction;
  int max_depth = kUnlimitedDepth;  // number of split levels allowed
  double sample_rate = 1.0;         // bootstrap size fraction, (0, 1]
  int min_samples_split = 2;
  std::uint64_t seed = 0;

  bool operator==(const HyperParams&) const = default;
};

std::size_t resolve_mtry(const HyperParams& params, std::size_t n_features);

// Flat node arena; index 0 is the root. feature == -1 marks a leaf.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::int64_t counts[2] = {0, 0};   // training class counts at this node
  double impurity_decrease = 0.0;    // 0 at leaves
  double sample_fraction = 0.0;      // node rows / tree training rows
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  Label predict(std::span<const double> row) const;
  // Unlawful share of the leaf the row falls into (used for vote ties).
  const TreeNode& leaf_for(std::span<const double> row) const;
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  HyperParams params;
  std::size_t feature_count = 0;
  std::vector<std::vector<std::int32_t>> oob_indices;  // per tree, ascending
};

struct Prediction {
  Label label = Label::Lawful;
  double unlawful_vote_fraction = 0.0;  // Unlawful iff fraction >= 0.5
};

// G = sum p_i (1 - p_i). Throws EmptyNode when all counts are zero.
double gini_impurity(std::span<const std::int64_t> counts);

struct Split {
  int feature = 0;
  double threshold = 0.0;
  double impurity_decrease = 0.0;
};

// Best (feature, midpoint threshold) by weighted Gini decrease over the given
// candidate features; nullopt when no split improves. Ties keep the first
// candidate in ascending (feature, threshold) order. Reference path used by
// tests; tree growth uses an equivalent presorted scan.
std::optional<Split> best_split(const Matrix& x, const std::vector<Label>& y,
                                const std::vector<std::int32_t>& rows,
                                std::vector<int> features);

// Column-major copy of the feature matrix plus one global sort order per
// feature; shared read-only by every tree of a fit.
struct FeatureColumns {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> values;                        // m * n, column blocks
  std::vector<std::vector<std::int32_t>> order;      // per feature

  static FeatureColumns build(const Matrix& x);
  double value(std::size_t feature, std::size_t row) const {
    return values[feature * n + row];
  }
};

// Grow one tree on an explicit row multiset (bootstrap duplicates allowed).
// Per-node candidate features come from a stream derived from the tree seed
// and the node's root path, so a depth-(d+1) tree refines the depth-d tree.
DecisionTree grow_tree(const FeatureColumns& cols, const std::vector<Label>& y,
                       const std::vector<std::int32_t>& rows,
                       const HyperParams& params, std::uint64_t tree_seed);

// ntrees bootstrap-bagged trees, per-tree derived streams; identical output
// for any worker count. Throws SingleClassInput.
RandomForestModel fit_forest(const Dataset& d, const HyperParams& params,
                             unsigned workers = 0);

// Majority vote. A 50/50 tie resolves to Unlawful by default (the costlier
// miss in screening is a false clearance); tie_to_unlawful=false flips that.
Prediction predict(const RandomForestModel& model, std::span<const double> row,
                   bool tie_to_unlawful = true);
std::vector<Prediction> predict_all(const RandomForestModel& model,
                                    const Matrix& x,
                                    bool tie_to_unlawful = true);

double accuracy(const RandomForestModel& model, const Dataset& d);

// Per-row majority among the trees that kept the row out of bag; rows seen by
// every bootstrap are excluded from the denominator. Throws NoOobRows.
double oob_error(const RandomForestModel& model, const Dataset& d);

// Mean over trees of sample_fraction * impurity_decrease per split feature,
// normalized to sum to 1 (all-zero when no tree ever split).
std::vector<double> mdi_importance(const RandomForestModel& model);

std::string forest_to_json_text(const RandomForestModel& model);
RandomForestModel forest_from_json_text(const std::string& text);

}  // namespace insider
