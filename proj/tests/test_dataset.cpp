#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "insider/dataset.hpp"
#include "insider/errors.hpp"
#include "insider/forest.hpp"
#include "insider/io_util.hpp"
#include "insider/linalg.hpp"
#include "insider/rng.hpp"

using namespace insider;

namespace {

Dataset tiny_dataset(std::size_t n, Label fill) {
  Dataset d;
  d.x = Matrix(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    d.x(r, 0) = static_cast<double>(r);
    d.x(r, 1) = static_cast<double>(r % 3);
  }
  d.y.assign(n, fill);
  return d;
}

}  // namespace

TEST_CASE("zscore_normalize worked examples") {
  SUBCASE("simple column") {
    const auto [out, params] = zscore_normalize(Matrix::from_rows({{1}, {2}, {3}}));
    CHECK(params.means[0] == doctest::Approx(2.0));
    CHECK(params.stds[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(out(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(out(1, 0) == doctest::Approx(0.0));
    CHECK(out(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
  }
  SUBCASE("constant column is centered only") {
    const auto [out, params] = zscore_normalize(Matrix::from_rows({{5}, {5}, {5}}));
    CHECK(params.stds[0] == 0.0);
    for (std::size_t r = 0; r < 3; ++r) CHECK(out(r, 0) == 0.0);
  }
  SUBCASE("already-normalized column is unchanged") {
    const auto [once, p1] = zscore_normalize(Matrix::from_rows({{1}, {2}, {3}, {7}}));
    const auto [twice, p2] = zscore_normalize(once);
    for (std::size_t r = 0; r < 4; ++r)
      CHECK(std::abs(twice(r, 0) - once(r, 0)) <= 1e-9);
    CHECK(std::abs(p2.means[0]) <= 1e-9);
    CHECK(p2.stds[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("non-finite input") {
    Matrix bad(1, 1);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(zscore_normalize(bad), NonFiniteInput);
  }
}

TEST_CASE("normalize then apply-params reproduces the one-shot result") {
  Rng rng(5);
  Matrix x(40, 6);
  for (auto& v : x.data()) v = rng.uniform(-10, 10);
  x(3, 2) = 7.0;  // keep a constant column in play
  for (std::size_t r = 0; r < x.rows(); ++r) x(r, 4) = 7.0;

  const auto [normed, params] = zscore_normalize(x);
  const Matrix replayed = apply_normalization(params, x);
  for (std::size_t i = 0; i < normed.data().size(); ++i)
    CHECK(std::abs(normed.data()[i] - replayed.data()[i]) <= 1e-12);

  // non-constant columns end at mean 0, population std 1
  for (std::size_t c = 0; c < x.cols(); ++c) {
    if (params.stds[c] == 0.0) continue;
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += normed(r, c);
    mean /= static_cast<double>(x.rows());
    double var = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r)
      var += (normed(r, c) - mean) * (normed(r, c) - mean);
    var /= static_cast<double>(x.rows());
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-9);
  }
}

TEST_CASE("one_hot_encode binary and k>=3 rules") {
  SUBCASE("binary flag becomes one column") {
    const Matrix m = one_hot_encode({0, 1, 0}, 2);  // A,D,A with A first
    REQUIRE(m.cols() == 1);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(1, 0) == 0.0);
    CHECK(m(2, 0) == 1.0);
  }
  SUBCASE("three categories give indicators") {
    const Matrix m = one_hot_encode({1}, 3);
    REQUIRE(m.cols() == 3);
    CHECK(m(0, 0) == 0.0);
    CHECK(m(0, 1) == 1.0);
    CHECK(m(0, 2) == 0.0);
  }
  SUBCASE("unknown category") {
    CHECK_THROWS_AS(one_hot_encode({3}, 3), UnknownCategory);
  }
  SUBCASE("rows sum to one for k>=3") {
    Rng rng(9);
    for (int k = 3; k <= 6; ++k) {
      std::vector<int> values;
      for (int i = 0; i < 50; ++i)
        values.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
      const Matrix m = one_hot_encode(values, k);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) sum += m(r, c);
        CHECK(sum == 1.0);
      }
    }
  }
}

TEST_CASE("fill_missing copies from the subsequent quarter") {
  std::vector<PanelRecord> panel = {
      {"acme", 1, {std::nullopt, 2.0}},
      {"acme", 2, {5.0, std::nullopt}},
      {"acme", 3, {6.0, 7.0}},
      {"zeta", 1, {std::nullopt, 1.0}},
  };
  SUBCASE("window 1 takes only the next quarter") {
    const auto filled = fill_missing(panel, 1);
    CHECK(filled.records[0].values[0] == 5.0);   // Q1 <- Q2
    CHECK(filled.records[1].values[1] == 7.0);   // Q2 <- Q3
    CHECK_FALSE(filled.excluded[0]);
    CHECK(filled.excluded[3]);                   // zeta has no Q2
  }
  SUBCASE("window exhaustion flags the row") {
    std::vector<PanelRecord> lone = {{"solo", 1, {std::nullopt}}};
    const auto filled = fill_missing(lone, 3);
    CHECK(filled.excluded[0]);
    CHECK_FALSE(filled.records[0].values[0].has_value());
  }
  SUBCASE("window 3 reaches further ahead") {
    std::vector<PanelRecord> gap = {
        {"acme", 1, {std::nullopt}}, {"acme", 3, {9.0}}};
    CHECK_FALSE(fill_missing(gap, 1).records[0].values[0].has_value());
    CHECK(fill_missing(gap, 3).records[0].values[0] == 9.0);
  }
  SUBCASE("complete input is the identity") {
    const auto filled = fill_missing({{"acme", 1, {1.0, 2.0}}}, 1);
    CHECK(filled.records[0].values[0] == 1.0);
    CHECK_FALSE(filled.excluded[0]);
  }
}

TEST_CASE("balanced_sample draws equal classes deterministically") {
  const Dataset unlawful = tiny_dataset(400, Label::Unlawful);
  const Dataset lawful = tiny_dataset(1200, Label::Lawful);

  SUBCASE("320 -> 160 + 160") {
    const Dataset s = balanced_sample(unlawful, lawful, 320, 7);
    REQUIRE(s.n_rows() == 320);
    std::size_t n_unlawful = 0;
    for (auto l : s.y)
      if (l == Label::Unlawful) ++n_unlawful;
    CHECK(n_unlawful == 160);
  }
  SUBCASE("whole unlawful side is used when the pool is exactly half") {
    const Dataset s = balanced_sample(unlawful, lawful, 800, 7);
    std::set<double> seen;
    for (std::size_t r = 0; r < 400; ++r) seen.insert(s.x(r, 0));
    CHECK(seen.size() == 400);  // every unlawful row appears exactly once
  }
  SUBCASE("insufficient pool") {
    CHECK_THROWS_AS(balanced_sample(tiny_dataset(150, Label::Unlawful), lawful, 400, 7),
                    InsufficientPool);
  }
  SUBCASE("determinism") {
    const Dataset a = balanced_sample(unlawful, lawful, 320, 42);
    const Dataset b = balanced_sample(unlawful, lawful, 320, 42);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
  }
}

TEST_CASE("train_test_split is stratified, disjoint and exhaustive") {
  Dataset d = tiny_dataset(320, Label::Lawful);
  for (std::size_t r = 0; r < 160; ++r) d.y[r] = Label::Unlawful;
  d.x = Matrix(320, 1);
  for (std::size_t r = 0; r < 320; ++r) d.x(r, 0) = static_cast<double>(r);

  SUBCASE("counts at 0.8") {
    const auto [train, test] = train_test_split(d, 0.8, 3);
    CHECK(train.n_rows() == 256);
    CHECK(test.n_rows() == 64);
    std::size_t train_unlawful = 0, test_unlawful = 0;
    for (auto l : train.y)
      if (l == Label::Unlawful) ++train_unlawful;
    for (auto l : test.y)
      if (l == Label::Unlawful) ++test_unlawful;
    CHECK(train_unlawful == 128);
    CHECK(test_unlawful == 32);

    std::set<double> ids;
    for (std::size_t r = 0; r < train.n_rows(); ++r) ids.insert(train.x(r, 0));
    for (std::size_t r = 0; r < test.n_rows(); ++r) ids.insert(test.x(r, 0));
    CHECK(ids.size() == 320);  // partition: disjoint and exhaustive
  }
  SUBCASE("degenerate fraction") {
    Dataset small = tiny_dataset(10, Label::Lawful);
    for (std::size_t r = 0; r < 5; ++r) small.y[r] = Label::Unlawful;
    CHECK_THROWS_AS(train_test_split(small, 0.999, 1), DegenerateSplit);
  }
  SUBCASE("same seed gives identical partitions") {
    const auto [a_train, a_test] = train_test_split(d, 0.8, 11);
    const auto [b_train, b_test] = train_test_split(d, 0.8, 11);
    CHECK(a_train.x == b_train.x);
    CHECK(a_test.x == b_test.x);
  }
}

TEST_CASE("generate_synthetic planted structure") {
  SUBCASE("balanced and deterministic") {
    const Dataset a = generate_synthetic(200, 10, 3, 2.0, 0, 17);
    const Dataset b = generate_synthetic(200, 10, 3, 2.0, 0, 17);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    std::size_t unlawful = 0;
    for (auto l : a.y)
      if (l == Label::Unlawful) ++unlawful;
    CHECK(unlawful == 100);
  }
  SUBCASE("zero separation leaves nothing to learn") {
    const Dataset d = generate_synthetic(400, 8, 3, 0.0, 0, 5);
    const auto [train, test] = train_test_split(d, 0.8, 5);
    HyperParams params;
    params.ntrees = 60;
    params.seed = 5;
    const auto model = fit_forest(train, params, 2);
    const double acc = accuracy(model, test);
    CHECK(acc > 0.30);
    CHECK(acc < 0.70);
  }
  SUBCASE("separation 6 is learnable to 0.99+ even depth-limited") {
    const Dataset d = generate_synthetic(800, 25, 5, 6.0, 0, 7);
    const auto [train, test] = train_test_split(d, 0.8, 7);
    HyperParams params;
    params.ntrees = 80;
    params.max_depth = 4;
    params.seed = 7;
    const auto model = fit_forest(train, params, 2);
    CHECK(accuracy(model, test) >= 0.99);
  }
  SUBCASE("correlated groups plant |rho| >= 0.9 pairs") {
    const Dataset d = generate_synthetic(600, 12, 4, 1.0, 3, 9);
    const auto corr = spearman_correlation(d.x);
    for (std::size_t g = 0; g < 3; ++g)
      CHECK(std::abs(corr(g, 4 + g)) >= 0.9);
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(generate_synthetic(11, 5, 2, 1.0, 0, 1), InvalidSpec);
    CHECK_THROWS_AS(generate_synthetic(10, 5, 6, 1.0, 0, 1), InvalidSpec);
    CHECK_THROWS_AS(generate_synthetic(10, 5, 3, 1.0, 4, 1), InvalidSpec);
    CHECK_THROWS_AS(generate_synthetic(10, 5, 3, -1.0, 0, 1), InvalidSpec);
  }
}

TEST_CASE("feature CSV round trip") {
  const Dataset d = generate_synthetic(60, 5, 2, 1.5, 1, 3);
  const auto path = std::filesystem::temp_directory_path() / "insider_feat_rt.csv";
  write_feature_csv(path.string(), d);
  const Dataset back = read_feature_csv(path.string());
  REQUIRE(back.n_rows() == d.n_rows());
  REQUIRE(back.n_features() == d.n_features());
  CHECK(back.y == d.y);
  for (std::size_t i = 0; i < d.x.data().size(); ++i)
    CHECK(back.x.data()[i] == d.x.data()[i]);  // shortest round-trip is exact
  CHECK(back.schema.features[0].name == "signal_0");
  std::filesystem::remove(path);
}

TEST_CASE("schema JSON validates uniqueness and kinds") {
  const std::string text = R"({"name":"t","features":[
    {"name":"a","kind":"numeric","group":"G"},
    {"name":"b","kind":"categorical","cardinality":2,"group":"G"}]})";
  const FeatureSchema s = schema_from_json_text(text);
  CHECK(s.size() == 2);
  CHECK(s.features[1].kind == FeatureKind::Categorical);
  CHECK(s.index_of("b") == 1);
  CHECK(s.index_of("zz") == -1);

  const std::string dup = R"({"name":"t","features":[
    {"name":"a","kind":"numeric","group":""},
    {"name":"a","kind":"numeric","group":""}]})";
  CHECK_THROWS_AS(schema_from_json_text(dup), InvalidSpec);

  // round trip
  const FeatureSchema again = schema_from_json_text(schema_to_json_text(s));
  CHECK(again == s);
}

TEST_CASE("bundled schema files load and have the documented sizes") {
  const std::string dir = std::string(INSIDER_DATA_DIR) + "/schemas/";
  const FeatureSchema dcz = schema_from_json_text(read_file(dir + "dcz25.json"));
  CHECK(dcz.size() == 25);
  std::size_t categorical = 0;
  for (const auto& f : dcz.features)
    if (f.kind == FeatureKind::Categorical) ++categorical;
  CHECK(categorical == 5);

  const FeatureSchema full = schema_from_json_text(read_file(dir + "full110.json"));
  CHECK(full.size() >= 110);
  full.validate();
}
