#include "insider/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "insider/errors.hpp"
#include "insider/parallel.hpp"
#include "insider/rng.hpp"

namespace insider {

using nlohmann::json;

std::size_t resolve_mtry(const HyperParams& params, std::size_t n_features) {
  if (n_features == 0) throw DimensionMismatch("dataset has no features");
  const double fraction = params.mtry_fraction
                              ? *params.mtry_fraction
                              : std::sqrt(static_cast<double>(n_features)) /
                                    static_cast<double>(n_features);
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("mtry fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n_features)));
  return std::clamp<std::size_t>(k, 1, n_features);
}

double gini_impurity(std::span<const std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  if (total <= 0) throw EmptyNode("gini of an empty node");
  double g = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    g += p * (1.0 - p);
  }
  return g;
}

namespace {

double gini2(std::int64_t a, std::int64_t b) {
  const double n = static_cast<double>(a + b);
  const double pa = static_cast<double>(a) / n;
  const double pb = static_cast<double>(b) / n;
  return pa * (1.0 - pa) + pb * (1.0 - pb);
}

// A split must beat the incumbent by more than this. Rationally-zero
// decreases evaluate to ~1e-17 noise in doubles, while the smallest genuine
// gain is ~1/n^3 (1.6e-11 even at four thousand rows), so 1e-12 separates the
// two cleanly and a no-gain node stays a leaf.
constexpr double kMinGainStep = 1e-12;

// Weighted Gini decrease for a (parent -> left/right) split. The single
// evaluation path keeps exact ties bit-equal wherever they are compared.
double split_gini_decrease(std::int64_t p0, std::int64_t p1, std::int64_t l0,
                           std::int64_t l1) {
  const std::int64_t r0 = p0 - l0;
  const std::int64_t r1 = p1 - l1;
  const double n = static_cast<double>(p0 + p1);
  return gini2(p0, p1) -
         (static_cast<double>(l0 + l1) * gini2(l0, l1) +
          static_cast<double>(r0 + r1) * gini2(r0, r1)) /
             n;
}

// Midpoint of two consecutive distinct values, nudged down when rounding
// lands on the upper value so that `x <= threshold` keeps the block split.
double midpoint_threshold(double lo, double hi) {
  double thr = (lo + hi) * 0.5;
  if (thr >= hi) thr = lo;
  return thr;
}

}  // namespace

std::optional<Split> best_split(const Matrix& x, const std::vector<Label>& y,
                                const std::vector<std::int32_t>& rows,
                                std::vector<int> features) {
  if (rows.empty() || features.empty()) return std::nullopt;
  std::sort(features.begin(), features.end());

  std::int64_t p0 = 0, p1 = 0;
  for (auto r : rows) (y[static_cast<std::size_t>(r)] == Label::Lawful ? p0 : p1)++;

  std::optional<Split> best;
  double best_decrease = 0.0;
  std::vector<std::pair<double, std::int8_t>> sorted;
  for (int f : features) {
    sorted.clear();
    sorted.reserve(rows.size());
    for (auto r : rows)
      sorted.emplace_back(x(static_cast<std::size_t>(r), static_cast<std::size_t>(f)),
                          static_cast<std::int8_t>(y[static_cast<std::size_t>(r)]));
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::int64_t l0 = 0, l1 = 0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      (sorted[i].second == 0 ? l0 : l1)++;
      if (sorted[i + 1].first > sorted[i].first) {
        const double d = split_gini_decrease(p0, p1, l0, l1);
        if (d > best_decrease + kMinGainStep) {
          best_decrease = d;
          best = Split{f, midpoint_threshold(sorted[i].first, sorted[i + 1].first), d};
        }
      }
    }
  }
  return best;
}

FeatureColumns FeatureColumns::build(const Matrix& x) {
  FeatureColumns cols;
  cols.n = x.rows();
  cols.m = x.cols();
  cols.values.resize(cols.n * cols.m);
  cols.order.resize(cols.m);
  for (std::size_t f = 0; f < cols.m; ++f) {
    double* block = cols.values.data() + f * cols.n;
    for (std::size_t r = 0; r < cols.n; ++r) block[r] = x(r, f);
    auto& ord = cols.order[f];
    ord.resize(cols.n);
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [block](std::int32_t a, std::int32_t b) {
      return block[a] < block[b];
    });
  }
  return cols;
}

DecisionTree grow_tree(const FeatureColumns& cols, const std::vector<Label>& y,
                       const std::vector<std::int32_t>& rows,
                       const HyperParams& params, std::uint64_t tree_seed) {
  if (rows.empty()) throw EmptyNode("cannot grow a tree on zero rows");
  const std::size_t m = cols.m;
  const std::size_t mtry = resolve_mtry(params, m);
  const double total = static_cast<double>(rows.size());

  std::vector<std::int32_t> multiplicity(cols.n, 0);
  for (auto r : rows) multiplicity[static_cast<std::size_t>(r)]++;

  // row lists per feature in that feature's sorted order, bootstrap
  // duplicates expanded in place
  std::vector<std::vector<std::int32_t>> root_rows(m);
  for (std::size_t f = 0; f < m; ++f) {
    auto& dst = root_rows[f];
    dst.reserve(rows.size());
    for (auto r : cols.order[f])
      for (std::int32_t c = 0; c < multiplicity[static_cast<std::size_t>(r)]; ++c)
        dst.push_back(r);
  }

  struct Work {
    int node;
    std::vector<std::vector<std::int32_t>> rows;
    int depth;
    std::uint64_t path;
  };

  DecisionTree tree;
  tree.nodes.emplace_back();
  std::vector<Work> stack;
  stack.push_back(Work{0, std::move(root_rows), 0, 0x9e3779b97f4a7c15ULL});

  std::vector<std::size_t> candidates;
  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();

    const auto& primary = w.rows[0];
    const auto n_node = static_cast<std::int64_t>(primary.size());
    std::int64_t c0 = 0, c1 = 0;
    for (auto r : primary) (y[static_cast<std::size_t>(r)] == Label::Lawful ? c0 : c1)++;

    tree.nodes[static_cast<std::size_t>(w.node)].counts[0] = c0;
    tree.nodes[static_cast<std::size_t>(w.node)].counts[1] = c1;
    tree.nodes[static_cast<std::size_t>(w.node)].sample_fraction =
        static_cast<double>(n_node) / total;

    const bool depth_capped =
        params.max_depth != kUnlimitedDepth && w.depth >= params.max_depth;
    if (depth_capped || n_node < params.min_samples_split || c0 == 0 || c1 == 0)
      continue;  // leaf

    // candidate features from a stream derived from (tree, node path); the
    // draw does not depend on traversal order, so capping the depth only
    // prunes subtrees instead of reshuffling siblings
    Rng node_rng(hash_seed(tree_seed, w.path));
    candidates.clear();
    if (mtry == m) {
      for (std::size_t f = 0; f < m; ++f) candidates.push_back(f);
    } else {
      candidates = node_rng.sample_without_replacement(m, mtry);
      std::sort(candidates.begin(), candidates.end());
    }

    int best_f = -1;
    double best_thr = 0.0;
    double best_decrease = 0.0;
    for (std::size_t f : candidates) {
      const double* values = cols.values.data() + f * cols.n;
      const auto& rs = w.rows[f];
      std::int64_t l0 = 0, l1 = 0;
      for (std::size_t i = 0; i + 1 < rs.size(); ++i) {
        (y[static_cast<std::size_t>(rs[i])] == Label::Lawful ? l0 : l1)++;
        const double v = values[rs[i]];
        const double v_next = values[rs[i + 1]];
        if (v_next > v) {
          const double d = split_gini_decrease(c0, c1, l0, l1);
          if (d > best_decrease + kMinGainStep) {
            best_decrease = d;
            best_f = static_cast<int>(f);
            best_thr = midpoint_threshold(v, v_next);
          }
        }
      }
    }
    if (best_f < 0) continue;  // no split improves; leaf

    const double* split_values = cols.values.data() +
                                 static_cast<std::size_t>(best_f) * cols.n;
    std::vector<std::vector<std::int32_t>> left_rows(m), right_rows(m);
    for (std::size_t f = 0; f < m; ++f) {
      auto& lf = left_rows[f];
      auto& rf = right_rows[f];
      for (auto r : w.rows[f])
        (split_values[r] <= best_thr ? lf : rf).push_back(r);
      w.rows[f].clear();
      w.rows[f].shrink_to_fit();
    }

    const int left_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int right_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.feature = best_f;
    node.threshold = best_thr;
    node.impurity_decrease = best_decrease;
    node.left = left_index;
    node.right = right_index;

    stack.push_back(Work{right_index, std::move(right_rows), w.depth + 1,
                         hash_seed(w.path, 2)});
    stack.push_back(Work{left_index, std::move(left_rows), w.depth + 1,
                         hash_seed(w.path, 1)});
  }
  return tree;
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(
        row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i];
}

Label DecisionTree::predict(std::span<const double> row) const {
  const TreeNode& leaf = leaf_for(row);
  // tie at the leaf resolves to Unlawful, same direction as the forest vote
  return leaf.counts[1] >= leaf.counts[0] ? Label::Unlawful : Label::Lawful;
}

namespace {

void validate_params(const HyperParams& params) {
  if (params.ntrees < 1) throw ConfigError("ntrees must be >= 1");
  if (!(params.sample_rate > 0.0 && params.sample_rate <= 1.0))
    throw ConfigError("sample rate must lie in (0, 1]");
  if (params.max_depth != kUnlimitedDepth && params.max_depth < 1)
    throw ConfigError("max depth must be >= 1 or unlimited");
  if (params.min_samples_split < 2)
    throw ConfigError("min samples split must be >= 2");
  if (params.mtry_fraction &&
      !(*params.mtry_fraction > 0.0 && *params.mtry_fraction <= 1.0))
    throw ConfigError("mtry fraction must lie in (0, 1]");
}

}  // namespace

RandomForestModel fit_forest(const Dataset& d, const HyperParams& params,
                             unsigned workers) {
  d.validate();
  validate_params(params);
  const std::size_t n = d.n_rows();
  bool has[2] = {false, false};
  for (auto l : d.y) has[static_cast<std::size_t>(l)] = true;
  if (n < 2 || !has[0] || !has[1])
    throw SingleClassInput("training data must contain both classes");

  const FeatureColumns cols = FeatureColumns::build(d.x);
  const auto n_bootstrap = static_cast<std::size_t>(
      std::ceil(params.sample_rate * static_cast<double>(n)));

  RandomForestModel model;
  model.params = params;
  model.feature_count = d.n_features();
  model.trees.resize(static_cast<std::size_t>(params.ntrees));
  model.oob_indices.resize(static_cast<std::size_t>(params.ntrees));

  parallel_for(static_cast<std::size_t>(params.ntrees), workers, [&](std::size_t t) {
    Rng boot(hash_seed(params.seed, stream::kBootstrap, t));
    std::vector<std::int32_t> rows(n_bootstrap);
    std::vector<std::uint8_t> in_bag(n, 0);
    for (auto& r : rows) {
      r = static_cast<std::int32_t>(boot.below(n));
      in_bag[static_cast<std::size_t>(r)] = 1;
    }
    auto& oob = model.oob_indices[t];
    for (std::size_t r = 0; r < n; ++r)
      if (!in_bag[r]) oob.push_back(static_cast<std::int32_t>(r));
    model.trees[t] =
        grow_tree(cols, d.y, rows, params, hash_seed(params.seed, stream::kTree, t));
  });
  return model;
}

Prediction predict(const RandomForestModel& model, std::span<const double> row,
                   bool tie_to_unlawful) {
  if (row.size() != model.feature_count)
    throw DimensionMismatch("row has " + std::to_string(row.size()) +
                            " features, model expects " +
                            std::to_string(model.feature_count));
  std::size_t unlawful_votes = 0;
  for (const auto& tree : model.trees)
    if (tree.predict(row) == Label::Unlawful) ++unlawful_votes;
  Prediction p;
  p.unlawful_vote_fraction = static_cast<double>(unlawful_votes) /
                             static_cast<double>(model.trees.size());
  const bool unlawful = tie_to_unlawful ? p.unlawful_vote_fraction >= 0.5
                                        : p.unlawful_vote_fraction > 0.5;
  p.label = unlawful ? Label::Unlawful : Label::Lawful;
  return p;
}

std::vector<Prediction> predict_all(const RandomForestModel& model, const Matrix& x,
                                    bool tie_to_unlawful) {
  if (x.cols() != model.feature_count)
    throw DimensionMismatch("matrix has " + std::to_string(x.cols()) +
                            " features, model expects " +
                            std::to_string(model.feature_count));
  std::vector<Prediction> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* row = x.data().data() + r * x.cols();
    out[r] = predict(model, std::span<const double>(row, x.cols()), tie_to_unlawful);
  }
  return out;
}

double accuracy(const RandomForestModel& model, const Dataset& d) {
  if (d.n_rows() == 0) throw EmptyInput("accuracy over zero rows");
  const auto preds = predict_all(model, d.x);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < preds.size(); ++r)
    if (preds[r].label == d.y[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double oob_error(const RandomForestModel& model, const Dataset& d) {
  const std::size_t n = d.n_rows();
  std::vector<std::uint32_t> votes_unlawful(n, 0), votes_total(n, 0);
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    for (auto r : model.oob_indices[t]) {
      const double* row = d.x.data().data() + static_cast<std::size_t>(r) * d.x.cols();
      const Label l = model.trees[t].predict(std::span<const double>(row, d.x.cols()));
      if (l == Label::Unlawful) ++votes_unlawful[static_cast<std::size_t>(r)];
      ++votes_total[static_cast<std::size_t>(r)];
    }
  }
  std::size_t counted = 0, wrong = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (votes_total[r] == 0) continue;  // row appeared in every bootstrap
    ++counted;
    const Label pred = 2 * votes_unlawful[r] >= votes_total[r] ? Label::Unlawful
                                                               : Label::Lawful;
    if (pred != d.y[r]) ++wrong;
  }
  if (counted == 0) throw NoOobRows("every row appeared in every bootstrap");
  return static_cast<double>(wrong) / static_cast<double>(counted);
}

std::vector<double> mdi_importance(const RandomForestModel& model) {
  std::vector<double> mean(model.feature_count, 0.0);
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature >= 0)
        mean[static_cast<std::size_t>(node.feature)] +=
            node.sample_fraction * node.impurity_decrease;
    }
  }
  for (auto& v : mean) v /= static_cast<double>(model.trees.size());
  const double total = std::accumulate(mean.begin(), mean.end(), 0.0);
  if (total > 0.0)
    for (auto& v : mean) v /= total;
  return mean;
}

namespace {

json node_to_json(const DecisionTree& tree, std::size_t index) {
  const TreeNode& n = tree.nodes[index];
  json j;
  j["counts"] = {n.counts[0], n.counts[1]};
  j["fraction"] = n.sample_fraction;
  if (n.feature < 0) {
    j["leaf"] = true;
  } else {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["decrease"] = n.impurity_decrease;
    j["left"] = node_to_json(tree, static_cast<std::size_t>(n.left));
    j["right"] = node_to_json(tree, static_cast<std::size_t>(n.right));
  }
  return j;
}

int node_from_json(const json& j, DecisionTree& tree) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  {
    TreeNode& n = tree.nodes.back();
    n.counts[0] = j.at("counts")[0].get<std::int64_t>();
    n.counts[1] = j.at("counts")[1].get<std::int64_t>();
    n.sample_fraction = j.at("fraction").get<double>();
  }
  if (!j.value("leaf", false)) {
    const int feature = j.at("feature").get<int>();
    const double threshold = j.at("threshold").get<double>();
    const double decrease = j.at("decrease").get<double>();
    const int left = node_from_json(j.at("left"), tree);
    const int right = node_from_json(j.at("right"), tree);
    TreeNode& n = tree.nodes[static_cast<std::size_t>(index)];
    n.feature = feature;
    n.threshold = threshold;
    n.impurity_decrease = decrease;
    n.left = left;
    n.right = right;
  }
  return index;
}

json params_to_json(const HyperParams& p) {
  json j;
  j["ntrees"] = p.ntrees;
  if (p.mtry_fraction) j["mtry_fraction"] = *p.mtry_fraction;
  else j["mtry_fraction"] = nullptr;
  j["max_depth"] = p.max_depth;
  j["sample_rate"] = p.sample_rate;
  j["min_samples_split"] = p.min_samples_split;
  j["seed"] = p.seed;
  return j;
}

HyperParams params_from_json(const json& j) {
  HyperParams p;
  p.ntrees = j.at("ntrees").get<int>();
  if (!j.at("mtry_fraction").is_null())
    p.mtry_fraction = j.at("mtry_fraction").get<double>();
  p.max_depth = j.at("max_depth").get<int>();
  p.sample_rate = j.at("sample_rate").get<double>();
  p.min_samples_split = j.at("min_samples_split").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace

std::string forest_to_json_text(const RandomForestModel& model) {
  json j;
  j["params"] = params_to_json(model.params);
  j["feature_count"] = model.feature_count;
  j["trees"] = json::array();
  for (const auto& tree : model.trees) j["trees"].push_back(node_to_json(tree, 0));
  j["oob_indices"] = model.oob_indices;
  return j.dump() + "\n";
}

RandomForestModel forest_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("forest model JSON parse error: ") + e.what());
  }
  RandomForestModel model;
  model.params = params_from_json(j.at("params"));
  model.feature_count = j.at("feature_count").get<std::size_t>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree tree;
    node_from_json(tj, tree);
    model.trees.push_back(std::move(tree));
  }
  model.oob_indices =
      j.at("oob_indices").get<std::vector<std::vector<std::int32_t>>>();
  return model;
}

}  // namespace insider
