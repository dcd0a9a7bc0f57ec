#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "insider/matrix.hpp"

namespace insider {

enum class Label : std::uint8_t { Lawful = 0, Unlawful = 1 };

enum class FeatureKind : std::uint8_t { Numeric, Categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  int cardinality = 0;  // categorical only
  std::string group;

  bool operator==(const FeatureSpec&) const = default;
};

// Names are unique; |names| = |kinds| = |groups| by construction.
struct FeatureSchema {
  std::string id;  // e.g. "dcz25", "full110", "synthetic"
  std::vector<FeatureSpec> features;

  std::size_t size() const { return features.size(); }
  int index_of(const std::string& name) const;  // -1 when absent
  void validate() const;                        // throws InvalidSpec

  bool operator==(const FeatureSchema&) const = default;
};

FeatureSchema schema_from_json_text(const std::string& text);
std::string schema_to_json_text(const FeatureSchema& schema);

struct Dataset {
  Matrix x;
  std::vector<Label> y;
  FeatureSchema schema;
  bool normalized = false;

  std::size_t n_rows() const { return x.rows(); }
  std::size_t n_features() const { return x.cols(); }
  void validate() const;  // row/label agreement, finiteness

  Dataset subset_rows(const std::vector<std::size_t>& rows) const;
  Dataset subset_columns(const std::vector<std::size_t>& cols) const;
};

// Per-column means and population standard deviations. Constant columns are
// recorded with std 0 and are only centered when applied.
struct NormalizationParams {
  std::vector<double> means;
  std::vector<double> stds;
};

// (x - mu) / sigma with population sigma. Throws NonFiniteInput.
std::pair<Matrix, NormalizationParams> zscore_normalize(const Matrix& x);
Matrix apply_normalization(const NormalizationParams& params, const Matrix& x);

// k indicator columns for k >= 3; a single 0/1 column for k == 2 (indicator of
// category 0). Values must be in [0, k). Throws UnknownCategory.
Matrix one_hot_encode(const std::vector<int>& values, int cardinality);

// One (entity, quarter) feature record; nullopt marks a missing value.
struct PanelRecord {
  std::string entity;
  int quarter = 0;
  std::vector<std::optional<double>> values;
};

struct FilledPanel {
  std::vector<PanelRecord> records;  // same order as input
  std::vector<bool> excluded;       // still incomplete after the window
};

// A value missing at quarter t is copied from the nearest available quarter in
// t+1 .. t+window (window in [1, 3], default 1). Rows still incomplete are
// flagged excluded, not erased.
FilledPanel fill_missing(const std::vector<PanelRecord>& panel, int window = 1);

// n_total/2 rows sampled uniformly without replacement from each side.
// Output rows: sampled unlawful block first, then lawful. Deterministic for a
// given seed. Throws InsufficientPool.
Dataset balanced_sample(const Dataset& unlawful, const Dataset& lawful_pool,
                        std::size_t n_total, std::uint64_t seed);

// Stratified by label; both splits keep the input class ratio within one row.
// Throws DegenerateSplit when a split would receive zero rows of a class.
std::pair<Dataset, Dataset> train_test_split(const Dataset& d,
                                             double train_fraction,
                                             std::uint64_t seed);

std::pair<Dataset, Dataset> split_by_label(const Dataset& d);

// Balanced binary dataset with a planted signal. The first n_informative
// columns carry a class-conditional mean shift of class_separation (unlawful
// side shifted); the next correlated_groups columns duplicate informative
// columns 0..g-1 with small added noise; the rest are pure noise.
Dataset generate_synthetic(std::size_t n, std::size_t m,
                           std::size_t n_informative, double class_separation,
                           std::size_t correlated_groups, std::uint64_t seed);

// Feature CSV: header of feature names plus a final `label` column holding
// lawful|unlawful.
Dataset read_feature_csv(const std::string& path,
                         const std::string& schema_id = "csv");
void write_feature_csv(const std::string& path, const Dataset& d);

const char* label_name(Label l);
Label parse_label(const std::string& s);  // throws ConfigError

}  // namespace insider
