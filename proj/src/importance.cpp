#include "insider/importance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "insider/errors.hpp"
#include "insider/io_util.hpp"
#include "insider/parallel.hpp"
#include "insider/rng.hpp"

namespace insider {

using nlohmann::json;

namespace {

const char* method_name(ImportanceMethod m) {
  switch (m) {
    case ImportanceMethod::Mdi: return "mdi";
    case ImportanceMethod::Permutation: return "permutation";
    case ImportanceMethod::PermutationDecorrelated: return "permutation_decorrelated";
  }
  return "permutation";
}

std::vector<std::string> feature_names_or_default(const FeatureSchema& schema,
                                                  std::size_t m) {
  std::vector<std::string> names;
  if (schema.features.size() == m) {
    for (const auto& f : schema.features) names.push_back(f.name);
  } else {
    for (std::size_t i = 0; i < m; ++i) names.push_back("f" + std::to_string(i));
  }
  return names;
}

}  // namespace

std::string ImportanceReport::to_csv() const {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  std::string out = "rank,feature,method,split,mean_importance,std\n";
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t f = order[rank];
    out += std::to_string(rank + 1);
    out += ',';
    out += csv_escape(feature_names[f]);
    out += ',';
    out += method_name(method);
    out += ',';
    out += evaluated_on == EvalSplit::Train ? "train" : "test";
    out += ',';
    out += format_double(scores[f]);
    out += ',';
    out += format_double(score_std[f]);
    out += '\n';
  }
  return out;
}

ImportanceReport permutation_importance(const RandomForestModel& model,
                                        const Dataset& d, int n_repeats,
                                        std::uint64_t seed, EvalSplit split,
                                        unsigned workers) {
  if (model.feature_count != d.n_features())
    throw DimensionMismatch("model covers " + std::to_string(model.feature_count) +
                            " features, data has " + std::to_string(d.n_features()));
  if (n_repeats < 1) throw ConfigError("n_repeats must be >= 1");
  d.validate();

  const double baseline = accuracy(model, d);
  const std::size_t m = d.n_features();
  const std::size_t n = d.n_rows();

  ImportanceReport report;
  report.method = ImportanceMethod::Permutation;
  report.evaluated_on = split;
  report.feature_names = feature_names_or_default(d.schema, m);
  report.scores.assign(m, 0.0);
  report.score_std.assign(m, 0.0);

  parallel_for(m, workers, [&](std::size_t f) {
    Matrix shuffled = d.x;
    const std::vector<double> original = d.x.column(f);
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(n_repeats));
    for (int rep = 0; rep < n_repeats; ++rep) {
      Rng rng(hash_seed(seed, stream::kPermute,
                        hash_seed(f, static_cast<std::uint64_t>(rep))));
      std::vector<double> column = original;
      rng.shuffle(column);
      shuffled.set_column(f, column);

      std::size_t hits = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = shuffled.data().data() + r * m;
        Prediction p = predict(model, std::span<const double>(row, m));
        if (p.label == d.y[r]) ++hits;
      }
      samples.push_back(baseline - static_cast<double>(hits) / static_cast<double>(n));
    }
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(samples.size());
    report.scores[f] = mean;
    report.score_std[f] = std::sqrt(var);
  });
  return report;
}

ImportanceReport mdi_report(const RandomForestModel& model,
                            const FeatureSchema& schema) {
  ImportanceReport report;
  report.method = ImportanceMethod::Mdi;
  report.evaluated_on = EvalSplit::Train;
  report.scores = mdi_importance(model);
  report.score_std.assign(report.scores.size(), 0.0);
  report.feature_names = feature_names_or_default(schema, report.scores.size());
  return report;
}

std::string Dendrogram::to_json_text() const {
  json j;
  j["leaf_count"] = leaf_count;
  j["merges"] = json::array();
  for (const auto& m : merges)
    j["merges"].push_back({m.cluster_a, m.cluster_b, m.height, m.new_size});
  return j.dump(2) + "\n";
}

Dendrogram ward_cluster(const SymmetricMatrix& corr, bool signed_distance) {
  const std::size_t n = corr.dim();
  if (n == 0) throw BadCorrelationMatrix("empty correlation matrix");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(corr(i, i) - 1.0) > 1e-9)
      throw BadCorrelationMatrix("diagonal entry " + std::to_string(i) + " is not 1");
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(corr(i, j)) > 1.0 + 1e-9)
        throw BadCorrelationMatrix("entry (" + std::to_string(i) + "," +
                                   std::to_string(j) + ") outside [-1, 1]");
  }

  Dendrogram dend;
  dend.leaf_count = n;
  if (n == 1) return dend;

  // Lance-Williams on squared distances; reported heights are square roots,
  // so singleton merges come out at their plain distance.
  std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double rho = corr(i, j);
      const double dist = signed_distance ? 1.0 - rho : 1.0 - std::abs(rho);
      d2[i][j] = dist * dist;
    }
  }

  std::vector<bool> active(n, true);
  std::vector<std::size_t> size(n, 1);
  std::vector<std::size_t> dendro_id(n);
  std::iota(dendro_id.begin(), dendro_id.end(), std::size_t{0});

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_i = 0, best_j = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (d2[i][j] < best) {
          best = d2[i][j];
          best_i = i;
          best_j = j;
        }
      }
    }

    const std::size_t ni = size[best_i];
    const std::size_t nj = size[best_j];
    Merge merge;
    merge.cluster_a = std::min(dendro_id[best_i], dendro_id[best_j]);
    merge.cluster_b = std::max(dendro_id[best_i], dendro_id[best_j]);
    merge.height = std::sqrt(std::max(best, 0.0));
    merge.new_size = ni + nj;
    dend.merges.push_back(merge);

    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == best_i || k == best_j) continue;
      const double nk = static_cast<double>(size[k]);
      const double total = static_cast<double>(ni + nj) + nk;
      d2[best_i][k] = ((static_cast<double>(ni) + nk) * d2[best_i][k] +
                       (static_cast<double>(nj) + nk) * d2[best_j][k] -
                       nk * d2[best_i][best_j]) /
                      total;
      d2[k][best_i] = d2[best_i][k];
    }
    active[best_j] = false;
    size[best_i] = ni + nj;
    dendro_id[best_i] = n + step;
  }
  return dend;
}

std::vector<std::size_t> cluster_representatives(const Dendrogram& dend,
                                                 const SymmetricMatrix& corr,
                                                 double height_threshold) {
  if (height_threshold < 0.0) throw ConfigError("cluster threshold must be >= 0");
  const std::size_t n = dend.leaf_count;

  // union-find over the merges strictly below the threshold
  std::vector<std::size_t> parent(n + dend.merges.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t k = 0; k < dend.merges.size(); ++k) {
    const auto& m = dend.merges[k];
    if (m.height < height_threshold) {
      const std::size_t id = n + k;
      parent[find(m.cluster_a)] = id;
      parent[find(m.cluster_b)] = id;
    }
  }

  std::vector<std::vector<std::size_t>> groups;
  std::vector<long long> group_of(n + dend.merges.size(), -1);
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    const std::size_t root = find(leaf);
    if (group_of[root] < 0) {
      group_of[root] = static_cast<long long>(groups.size());
      groups.emplace_back();
    }
    groups[static_cast<std::size_t>(group_of[root])].push_back(leaf);
  }

  std::vector<std::size_t> reps;
  for (const auto& members : groups) {
    std::size_t best = members[0];
    double best_score = -2.0;
    for (std::size_t candidate : members) {
      double mean_abs = 0.0;
      if (members.size() > 1) {
        for (std::size_t other : members)
          if (other != candidate) mean_abs += std::abs(corr(candidate, other));
        mean_abs /= static_cast<double>(members.size() - 1);
      }
      if (mean_abs > best_score) {  // ties keep the lowest index (first seen)
        best_score = mean_abs;
        best = candidate;
      }
    }
    reps.push_back(best);
  }
  std::sort(reps.begin(), reps.end());
  return reps;
}

ImportanceReport decorrelated_permutation_importance(
    const Dataset& train, const Dataset& test, const HyperParams& params,
    double height_threshold, int n_repeats, std::uint64_t seed,
    bool signed_distance, unsigned workers) {
  if (train.n_features() != test.n_features())
    throw DimensionMismatch("train and test feature counts differ");
  if (train.schema.features != test.schema.features)
    throw ConfigError("train and test schemas differ");

  const SymmetricMatrix corr = spearman_correlation(train.x);
  const Dendrogram dend = ward_cluster(corr, signed_distance);
  const auto representatives = cluster_representatives(dend, corr, height_threshold);

  const Dataset train_r = train.subset_columns(representatives);
  const Dataset test_r = test.subset_columns(representatives);
  const RandomForestModel model = fit_forest(train_r, params, workers);

  ImportanceReport report =
      permutation_importance(model, test_r, n_repeats, seed, EvalSplit::Test, workers);
  report.method = ImportanceMethod::PermutationDecorrelated;
  return report;
}

}  // namespace insider
