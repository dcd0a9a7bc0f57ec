#include <doctest.h>

#include <cmath>

#include "insider/dataset.hpp"
#include "insider/errors.hpp"
#include "insider/pca.hpp"
#include "insider/rng.hpp"

using namespace insider;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t m) {
  Matrix x(n, m);
  for (auto& v : x.data()) v = rng.uniform(-3, 3);
  return x;
}

// population covariance of score columns
Matrix score_covariance(const Matrix& s) {
  const std::size_t n = s.rows(), k = s.cols();
  std::vector<double> mean(k, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) mean[c] += s(r, c);
  for (auto& v : mean) v /= static_cast<double>(n);
  Matrix cov(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        acc += (s(r, i) - mean[i]) * (s(r, j) - mean[j]);
      cov(i, j) = acc / static_cast<double>(n);
    }
  return cov;
}

}  // namespace

TEST_CASE("fit_pca on rank-1 data concentrates all variance") {
  Matrix x(6, 2);
  for (int r = 0; r < 6; ++r) {
    x(r, 0) = r - 2.5;
    x(r, 1) = r - 2.5;  // y = x line
  }
  const PcaModel m = fit_pca(x);
  CHECK(m.evr[0] == doctest::Approx(1.0));
  CHECK(m.evr[1] == doctest::Approx(0.0));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(m.components(0, 0) == doctest::Approx(inv_sqrt2));
  CHECK(m.components(1, 0) == doctest::Approx(inv_sqrt2));
}

TEST_CASE("fit_pca on isotropic data splits variance evenly") {
  const Matrix x = Matrix::from_rows({{2, 0}, {-2, 0}, {0, 2}, {0, -2}});
  const PcaModel m = fit_pca(x);
  CHECK(m.evr[0] == doctest::Approx(0.5));
  CHECK(m.evr[1] == doctest::Approx(0.5));
}

TEST_CASE("fit_pca rejects constant matrices") {
  CHECK_THROWS_AS(fit_pca(Matrix::from_rows({{3, 1}, {3, 1}, {3, 1}})), ZeroVariance);
}

TEST_CASE("pca model invariants hold on random data") {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20 + rng.below(60);
    const std::size_t m = 2 + rng.below(12);
    const Matrix x = random_matrix(rng, n, m);
    const PcaModel model = fit_pca(x);

    double evr_sum = 0.0;
    for (double v : model.evr) evr_sum += v;
    CHECK(std::abs(evr_sum - 1.0) <= 1e-9);
    CHECK(std::abs(model.cum_evr.back() - 1.0) <= 1e-9);
    for (std::size_t i = 0; i + 1 < model.cum_evr.size(); ++i)
      CHECK(model.cum_evr[i] <= model.cum_evr[i + 1] + 1e-15);

    // score covariance is diag(eigenvalues)
    const Matrix scores = pca_transform(model, x, m);
    const Matrix cov = score_covariance(scores);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        CHECK(std::abs(cov(i, j) - (i == j ? model.eigenvalues[i] : 0.0)) <= 1e-8);

    // variance ordering of score columns
    for (std::size_t i = 0; i + 1 < m; ++i)
      CHECK(cov(i, i) + 1e-10 >= cov(i + 1, i + 1));

    // full-k reconstruction
    const Matrix back = pca_inverse_transform(model, scores);
    for (std::size_t i = 0; i < x.data().size(); ++i)
      CHECK(std::abs(back.data()[i] - x.data()[i]) <= 1e-8);
  }
}

TEST_CASE("eigenvalues are invariant under column permutation") {
  Rng rng(31);
  const Matrix x = random_matrix(rng, 50, 6);
  Matrix permuted(50, 6);
  const std::size_t perm[6] = {3, 0, 5, 1, 4, 2};
  for (std::size_t r = 0; r < 50; ++r)
    for (std::size_t c = 0; c < 6; ++c) permuted(r, perm[c]) = x(r, c);

  const PcaModel a = fit_pca(x);
  const PcaModel b = fit_pca(permuted);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::abs(a.eigenvalues[i] - b.eigenvalues[i]) <= 1e-9);
}

TEST_CASE("select_components picks the smallest satisfying k") {
  PcaModel m;
  m.evr = {0.6, 0.3, 0.07, 0.03};
  m.cum_evr = {0.6, 0.9, 0.97, 1.0};
  m.eigenvalues = {6, 3, 0.7, 0.3};
  CHECK(select_components(m, 0.9476) == 3);
  CHECK(select_components(m, 1.0) == 4);
  CHECK(select_components(m, 0.5) == 1);

  PcaModel trailing;
  trailing.evr = {0.7, 0.3, 0.0};
  trailing.cum_evr = {0.7, 1.0, 1.0};
  CHECK(select_components(trailing, 1.0) == 2);  // trailing zero eigenvalue
}

TEST_CASE("pca transform argument checks") {
  Rng rng(8);
  const Matrix x = random_matrix(rng, 30, 4);
  const PcaModel m = fit_pca(x);
  CHECK_THROWS_AS(pca_transform(m, random_matrix(rng, 5, 3), 2), DimensionMismatch);
  CHECK_THROWS_AS(pca_transform(m, x, 0), KOutOfRange);
  CHECK_THROWS_AS(pca_transform(m, x, 5), KOutOfRange);
}

TEST_CASE("pca JSON round trip preserves the model") {
  Rng rng(99);
  const Matrix x = random_matrix(rng, 25, 5);
  const PcaModel m = fit_pca(x);
  const PcaModel back = pca_from_json_text(pca_to_json_text(m));
  CHECK(back.means == m.means);
  CHECK(back.eigenvalues == m.eigenvalues);
  CHECK(back.evr == m.evr);
  CHECK(back.components == m.components);
  const Matrix s1 = pca_transform(m, x, 3);
  const Matrix s2 = pca_transform(back, x, 3);
  CHECK(s1 == s2);
}
