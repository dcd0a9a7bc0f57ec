#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "insider/dataset.hpp"
#include "insider/forest.hpp"
#include "insider/linalg.hpp"

namespace insider {

enum class ImportanceMethod : std::uint8_t {
  Mdi,
  Permutation,
  PermutationDecorrelated
};

enum class EvalSplit : std::uint8_t { Train, Test };

struct ImportanceReport {
  std::vector<std::string> feature_names;
  std::vector<double> scores;      // mean importance per feature
  std::vector<double> score_std;   // over repeats (0 for MDI)
  ImportanceMethod method = ImportanceMethod::Permutation;
  EvalSplit evaluated_on = EvalSplit::Train;

  // rank,feature,method,split,mean_importance,std  (rank by descending score)
  std::string to_csv() const;
};

// Accuracy drop when one column is shuffled, model fixed; mean and population
// std over n_repeats with per-(feature, repeat) derived streams. Results are
// identical for any worker count.
ImportanceReport permutation_importance(const RandomForestModel& model,
                                        const Dataset& d, int n_repeats,
                                        std::uint64_t seed,
                                        EvalSplit split = EvalSplit::Test,
                                        unsigned workers = 0);

ImportanceReport mdi_report(const RandomForestModel& model,
                            const FeatureSchema& schema);

// Agglomerative merge list, scipy-style ids: leaves 0..n-1, then n, n+1, ...
struct Merge {
  std::size_t cluster_a = 0;
  std::size_t cluster_b = 0;
  double height = 0.0;
  std::size_t new_size = 0;
};

struct Dendrogram {
  std::vector<Merge> merges;  // leaf_count - 1 entries, heights non-decreasing
  std::size_t leaf_count = 0;

  std::string to_json_text() const;
};

// Ward's minimum-variance linkage (Lance-Williams on squared distances) over
// d_ij = 1 - |rho_ij| (or 1 - rho_ij with signed_distance). Throws
// BadCorrelationMatrix when the diagonal is off 1 or |entries| exceed 1+1e-9.
Dendrogram ward_cluster(const SymmetricMatrix& corr,
                        bool signed_distance = false);

// Cut applying merges with height < threshold; within each cluster keep the
// medoid (max mean |rho| to the other members; ties -> lowest index). Output
// ascending.
std::vector<std::size_t> cluster_representatives(const Dendrogram& dend,
                                                 const SymmetricMatrix& corr,
                                                 double height_threshold);

// Spearman on train -> Ward -> representatives -> refit on the representative
// columns -> permutation importance on the test split restricted to them.
ImportanceReport decorrelated_permutation_importance(
    const Dataset& train, const Dataset& test, const HyperParams& params,
    double height_threshold, int n_repeats, std::uint64_t seed,
    bool signed_distance = false, unsigned workers = 0);

}  // namespace insider
