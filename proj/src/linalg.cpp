#include "insider/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "insider/errors.hpp"

namespace insider {

namespace {

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

double offdiag_norm(const Matrix& a) {
  double s = 0.0;
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
  return std::sqrt(2.0 * s);
}

}  // namespace

SymmetricMatrix SymmetricMatrix::from(Matrix m) {
  if (m.rows() != m.cols())
    throw NotCentered("matrix is not square: " + std::to_string(m.rows()) +
                      "x" + std::to_string(m.cols()));
  if (!m.all_finite()) throw NonFiniteInput("symmetric matrix has non-finite entries");
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-12)
        throw NotCentered("matrix is not symmetric at (" + std::to_string(i) +
                          "," + std::to_string(j) + ")");
  return SymmetricMatrix{std::move(m)};
}

SymmetricMatrix covariance_matrix(const Matrix& centered) {
  const std::size_t n = centered.rows();
  const std::size_t m = centered.cols();
  if (n == 0) throw NotCentered("empty matrix");
  if (!centered.all_finite()) throw NonFiniteInput("covariance input has non-finite entries");
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += centered(r, c);
    mean /= static_cast<double>(n);
    if (std::abs(mean) > 1e-9)
      throw NotCentered("column " + std::to_string(c) + " mean is " +
                        std::to_string(mean));
  }
  Matrix cov(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += centered(r, i) * centered(r, j);
      s /= static_cast<double>(n);
      cov(i, j) = s;
      cov(j, i) = s;
    }
  }
  return SymmetricMatrix{std::move(cov)};
}

EigenDecomposition symmetric_eigen(const SymmetricMatrix& c) {
  const std::size_t n = c.dim();
  Matrix a = c.entries;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  const double scale = std::max(frobenius_norm(a), 1e-300);
  const double tol = 1e-14 * scale;
  constexpr int kMaxSweeps = 100;

  int sweep = 0;
  while (offdiag_norm(a) > tol) {
    if (++sweep > kMaxSweeps)
      throw NoConvergence("jacobi sweep cap reached at dim " + std::to_string(n));
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cos = 1.0 / std::sqrt(t * t + 1.0);
        const double sin = t * cos;
        // rotate rows/columns p and q of a
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = cos * akp - sin * akq;
          a(k, q) = sin * akp + cos * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = cos * apk - sin * aqk;
          a(q, k) = sin * apk + cos * aqk;
        }
        // accumulate the rotation into the eigenvector basis
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = cos * vkp - sin * vkq;
          v(k, q) = sin * vkp + cos * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t col = 0; col < n; ++col) {
    double value = diag[idx[col]];
    if (value < 0.0 && value > -1e-10) value = 0.0;  // PSD round-off
    out.values[col] = value;
    // sign convention: largest-magnitude component positive
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double mag = std::abs(v(r, idx[col]));
      if (mag > best) {
        best = mag;
        arg = r;
      }
    }
    const double sign = v(arg, idx[col]) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, col) = sign * v(r, idx[col]);
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    // positions i..j share the average of their 1-based ranks
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

SymmetricMatrix spearman_correlation(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  if (n < 2) throw TooFewRows("spearman needs at least 2 rows, got " + std::to_string(n));
  if (!x.all_finite()) throw NonFiniteInput("spearman input has non-finite entries");

  // centered rank columns
  std::vector<std::vector<double>> centered(m);
  std::vector<double> norms(m);
  for (std::size_t c = 0; c < m; ++c) {
    auto ranks = average_ranks(x.column(c));
    double mean = 0.0;
    for (double r : ranks) mean += r;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double& r : ranks) {
      r -= mean;
      ss += r * r;
    }
    centered[c] = std::move(ranks);
    norms[c] = std::sqrt(ss);
  }

  Matrix corr(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    corr(i, i) = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      double rho = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += centered[i][r] * centered[j][r];
        rho = dot / (norms[i] * norms[j]);
        rho = std::clamp(rho, -1.0, 1.0);
      }
      corr(i, j) = rho;
      corr(j, i) = rho;
    }
  }
  return SymmetricMatrix{std::move(corr)};
}

}  // namespace insider
