#pragma once

#include <span>
#include <vector>

#include "insider/matrix.hpp"

namespace insider {

// Square matrix with entries[i][j] == entries[j][i] within 1e-12.
struct SymmetricMatrix {
  Matrix entries;

  std::size_t dim() const { return entries.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return entries(i, j); }

  // Validates squareness, symmetry and finiteness.
  static SymmetricMatrix from(Matrix m);
};

// values sorted non-increasing; columns of `vectors` are unit eigenvectors in
// the same order. Sign convention: the largest-magnitude component of each
// vector is positive, so decompositions are reproducible run to run.
struct EigenDecomposition {
  std::vector<double> values;
  Matrix vectors;
};

// C = (1/N) * B^T B for a column-centered B (population convention).
// Throws NotCentered when a column mean exceeds 1e-9 in magnitude.
SymmetricMatrix covariance_matrix(const Matrix& centered);

// Full symmetric eigendecomposition by cyclic Jacobi rotations.
// Eigenvalues in [-1e-10, 0) are clipped to 0 (PSD round-off).
// Throws NoConvergence if the sweep cap is reached.
EigenDecomposition symmetric_eigen(const SymmetricMatrix& c);

// Fractional (average) ranks, 1-based; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

// Pearson correlation of column ranks. Constant columns correlate 0 with
// everything; the diagonal is exactly 1. Throws TooFewRows for < 2 rows.
SymmetricMatrix spearman_correlation(const Matrix& x);

}  // namespace insider
