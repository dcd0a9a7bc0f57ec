#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "insider/dataset.hpp"
#include "insider/errors.hpp"
#include "insider/importance.hpp"
#include "insider/rng.hpp"

using namespace insider;

namespace {

Dataset with_label_copy_feature(std::size_t n, std::uint64_t seed) {
  // feature 0 is an exact copy of the label; the rest is noise
  Rng rng(seed);
  Dataset d;
  d.x = Matrix(n, 5);
  d.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    d.y[r] = rng.below(2) ? Label::Unlawful : Label::Lawful;
    d.x(r, 0) = d.y[r] == Label::Unlawful ? 1.0 : 0.0;
    for (std::size_t c = 1; c < 5; ++c) d.x(r, c) = rng.uniform(-1, 1);
  }
  return d;
}

}  // namespace

TEST_CASE("permutation importance singles out a label-copy feature") {
  const Dataset train = with_label_copy_feature(400, 1);
  const Dataset test = with_label_copy_feature(200, 2);
  HyperParams params;
  params.ntrees = 60;
  params.seed = 1;
  const auto model = fit_forest(train, params, 2);

  const auto report = permutation_importance(model, test, 5, 3, EvalSplit::Test, 2);
  REQUIRE(report.scores.size() == 5);
  // baseline accuracy is ~1; shuffling the copy drops it to coin-flip level
  CHECK(report.scores[0] >= 0.3);
  for (std::size_t f = 1; f < 5; ++f) CHECK(report.scores[0] > report.scores[f]);
}

TEST_CASE("a feature untouched by any split has exactly zero importance") {
  Dataset train = with_label_copy_feature(200, 4);
  for (std::size_t r = 0; r < train.n_rows(); ++r) train.x(r, 3) = 2.5;  // constant
  HyperParams params;
  params.ntrees = 40;
  params.seed = 4;
  const auto model = fit_forest(train, params, 2);
  const auto report = permutation_importance(model, train, 7, 9, EvalSplit::Train, 2);
  CHECK(report.scores[3] == 0.0);
  CHECK(report.score_std[3] == 0.0);
}

TEST_CASE("permutation importance is reproducible and worker-independent") {
  const Dataset d = with_label_copy_feature(150, 6);
  HyperParams params;
  params.ntrees = 30;
  params.seed = 6;
  const auto model = fit_forest(d, params, 2);
  const auto a = permutation_importance(model, d, 3, 42, EvalSplit::Train, 1);
  const auto b = permutation_importance(model, d, 3, 42, EvalSplit::Train, 4);
  CHECK(a.scores == b.scores);
  CHECK(a.score_std == b.score_std);
}

TEST_CASE("ward_cluster joins exact duplicates first at height zero") {
  // f1 == f0, f2 independent
  Rng rng(8);
  Matrix x(50, 3);
  for (std::size_t r = 0; r < 50; ++r) {
    x(r, 0) = rng.uniform(-1, 1);
    x(r, 1) = x(r, 0);
    x(r, 2) = rng.uniform(-1, 1);
  }
  const auto dend = ward_cluster(spearman_correlation(x));
  REQUIRE(dend.merges.size() == 2);
  CHECK(dend.merges[0].cluster_a == 0);
  CHECK(dend.merges[0].cluster_b == 1);
  CHECK(dend.merges[0].height == doctest::Approx(0.0));
}

TEST_CASE("ward heights on equidistant leaves follow the Lance-Williams recurrence") {
  // identity correlation: all pairwise distances are 1; with Ward updates on
  // squared distances every merge lands at height 1 (hand computation)
  SUBCASE("three leaves") {
    Matrix corr(3, 3);
    for (int i = 0; i < 3; ++i) corr(i, i) = 1.0;
    const auto dend = ward_cluster(SymmetricMatrix::from(corr));
    REQUIRE(dend.merges.size() == 2);
    CHECK(dend.merges[0].height == doctest::Approx(1.0));
    CHECK(dend.merges[1].height == doctest::Approx(1.0));
    CHECK(dend.merges[1].new_size == 3);
  }
  SUBCASE("four leaves") {
    Matrix corr(4, 4);
    for (int i = 0; i < 4; ++i) corr(i, i) = 1.0;
    const auto dend = ward_cluster(SymmetricMatrix::from(corr));
    REQUIRE(dend.merges.size() == 3);
    for (const auto& m : dend.merges) CHECK(m.height == doctest::Approx(1.0));
  }
}

TEST_CASE("ward heights are non-decreasing on random correlation matrices") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 30 + rng.below(40);
    const std::size_t m = 3 + rng.below(10);
    Matrix x(n, m);
    for (auto& v : x.data()) v = rng.uniform(-2, 2);
    const auto dend = ward_cluster(spearman_correlation(x));
    for (std::size_t i = 0; i + 1 < dend.merges.size(); ++i)
      CHECK(dend.merges[i].height <= dend.merges[i + 1].height + 1e-12);
  }
}

TEST_CASE("ward_cluster validates its input") {
  Matrix bad(2, 2);
  bad(0, 0) = 0.5;
  bad(1, 1) = 1.0;
  CHECK_THROWS_AS(ward_cluster(SymmetricMatrix{bad}), BadCorrelationMatrix);
  Matrix big(2, 2);
  big(0, 0) = big(1, 1) = 1.0;
  big(0, 1) = big(1, 0) = 1.5;
  CHECK_THROWS_AS(ward_cluster(SymmetricMatrix{big}), BadCorrelationMatrix);
}

TEST_CASE("planted duplicate groups are recovered by the largest height gap") {
  const Dataset d = generate_synthetic(800, 11, 4, 1.0, 4, 21);
  // columns: 4 signals, 4 duplicates (of signals 0..3), 3 noise
  const auto corr = spearman_correlation(d.x);
  const auto dend = ward_cluster(corr);

  // cut at the largest gap between consecutive merge heights
  std::size_t gap_at = 0;
  double best_gap = -1.0;
  for (std::size_t i = 0; i + 1 < dend.merges.size(); ++i) {
    const double gap = dend.merges[i + 1].height - dend.merges[i].height;
    if (gap > best_gap) {
      best_gap = gap;
      gap_at = i;
    }
  }
  const double threshold =
      0.5 * (dend.merges[gap_at].height + dend.merges[gap_at + 1].height);
  const auto reps = cluster_representatives(dend, corr, threshold);

  // the four duplicate pairs collapse; noise and unpaired stay singletons
  CHECK(reps.size() == 7);
  for (std::size_t g = 0; g < 4; ++g) {
    const bool signal_kept = std::find(reps.begin(), reps.end(), g) != reps.end();
    const bool dup_kept = std::find(reps.begin(), reps.end(), 4 + g) != reps.end();
    CHECK(signal_kept != dup_kept);  // exactly one of each pair survives
  }
}

TEST_CASE("cluster_representatives edge cases") {
  Rng rng(5);
  Matrix x(60, 4);
  for (std::size_t r = 0; r < 60; ++r) {
    x(r, 0) = rng.uniform(-1, 1);
    x(r, 1) = x(r, 0);  // exact duplicate pair
    x(r, 2) = rng.uniform(-1, 1);
    x(r, 3) = rng.uniform(-1, 1);
  }
  const auto corr = spearman_correlation(x);
  const auto dend = ward_cluster(corr);

  SUBCASE("threshold 0 keeps every feature") {
    const auto reps = cluster_representatives(dend, corr, 0.0);
    CHECK(reps == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SUBCASE("threshold above the root keeps exactly one") {
    const double root = dend.merges.back().height;
    const auto reps = cluster_representatives(dend, corr, root + 1.0);
    CHECK(reps.size() == 1);
  }
  SUBCASE("duplicate pair resolves to the lower index on a tie") {
    const auto reps = cluster_representatives(dend, corr, 0.5);
    CHECK(std::find(reps.begin(), reps.end(), 0) != reps.end());
    CHECK(std::find(reps.begin(), reps.end(), 1) == reps.end());
  }
  SUBCASE("representative sets shrink weakly as the threshold rises") {
    std::size_t prev = 1000;
    for (double t : {0.0, 0.2, 0.5, 0.9, 1.2, 2.0}) {
      const auto reps = cluster_representatives(dend, corr, t);
      CHECK(reps.size() <= prev);
      prev = reps.size();
    }
  }
}

TEST_CASE("decorrelated importance equals plain importance when nothing clusters") {
  const Dataset train = generate_synthetic(300, 6, 3, 1.2, 0, 31);
  const Dataset test = generate_synthetic(300, 6, 3, 1.2, 0, 32);
  HyperParams params;
  params.ntrees = 40;
  params.seed = 31;

  // independent features: at threshold 0.5 everything stays its own cluster
  const auto deco = decorrelated_permutation_importance(train, test, params, 0.5,
                                                        4, 77, false, 2);
  const auto model = fit_forest(train, params, 2);
  const auto plain = permutation_importance(model, test, 4, 77, EvalSplit::Test, 2);
  CHECK(deco.scores == plain.scores);
  CHECK(deco.score_std == plain.score_std);
  CHECK(deco.method == ImportanceMethod::PermutationDecorrelated);
}

TEST_CASE("decorrelation restores importance split across a duplicated signal") {
  // one strong signal duplicated, moderate noise dimensions
  const Dataset train = generate_synthetic(1200, 8, 1, 2.5, 1, 61);
  const Dataset test = generate_synthetic(1200, 8, 1, 2.5, 1, 62);
  HyperParams params;
  params.ntrees = 200;
  params.mtry_fraction = 0.25;  // force trees to lean on whichever copy shows up
  params.seed = 61;

  const auto model = fit_forest(train, params, 2);
  const auto before = permutation_importance(model, test, 10, 5, EvalSplit::Test, 2);
  const double split_high = std::max(before.scores[0], before.scores[1]);

  const auto after = decorrelated_permutation_importance(train, test, params, 0.5,
                                                         10, 5, false, 2);
  // the duplicate pair collapsed to one representative: signal_0
  const auto it = std::find(after.feature_names.begin(), after.feature_names.end(),
                            "signal_0");
  REQUIRE(it != after.feature_names.end());
  const auto idx = static_cast<std::size_t>(it - after.feature_names.begin());
  CHECK(after.feature_names.size() == 7);
  CHECK(after.scores[idx] > split_high);
}

TEST_CASE("MDI favors a high-cardinality noise feature where permutation does not") {
  // feature 0: binary, informative with label noise; feature 1: continuous noise
  Rng rng(2025);
  const std::size_t n = 600;
  Dataset train;
  train.x = Matrix(n, 2);
  train.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const bool flag = rng.below(2) == 1;
    const bool flip = rng.unit() < 0.2;
    train.x(r, 0) = flag ? 1.0 : 0.0;
    train.x(r, 1) = rng.uniform(0, 1);
    train.y[r] = (flag != flip) ? Label::Unlawful : Label::Lawful;
  }
  Dataset test;
  test.x = Matrix(n, 2);
  test.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const bool flag = rng.below(2) == 1;
    const bool flip = rng.unit() < 0.2;
    test.x(r, 0) = flag ? 1.0 : 0.0;
    test.x(r, 1) = rng.uniform(0, 1);
    test.y[r] = (flag != flip) ? Label::Unlawful : Label::Lawful;
  }

  HyperParams params;
  params.ntrees = 100;
  params.mtry_fraction = 1.0;
  params.seed = 3;
  const auto model = fit_forest(train, params, 2);

  const auto mdi = mdi_importance(model);
  CHECK(mdi[1] > mdi[0]);  // cardinality bias: noise outranks the signal

  const auto perm = permutation_importance(model, test, 5, 11, EvalSplit::Test, 2);
  CHECK(perm.scores[0] > perm.scores[1]);  // permutation ranks the signal first
}

TEST_CASE("importance report CSV is ranked and dendrogram JSON is well formed") {
  ImportanceReport report;
  report.feature_names = {"a", "b", "c"};
  report.scores = {0.1, 0.5, 0.2};
  report.score_std = {0.01, 0.02, 0.03};
  report.method = ImportanceMethod::Permutation;
  report.evaluated_on = EvalSplit::Test;
  const std::string csv = report.to_csv();
  CHECK(csv.find("rank,feature,method,split,mean_importance,std\n") == 0);
  CHECK(csv.find("1,b,permutation,test,0.5,0.02") != std::string::npos);
  CHECK(csv.find("2,c,") != std::string::npos);
  CHECK(csv.find("3,a,") != std::string::npos);

  Matrix corr(2, 2);
  corr(0, 0) = corr(1, 1) = 1.0;
  const auto dend = ward_cluster(SymmetricMatrix::from(corr));
  const std::string j = dend.to_json_text();
  CHECK(j.find("\"leaf_count\": 2") != std::string::npos);
  CHECK(j.find("\"merges\"") != std::string::npos);
}
