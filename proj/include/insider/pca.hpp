#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "insider/matrix.hpp"

namespace insider {

struct PcaModel {
  std::vector<double> means;       // per input column
  std::vector<double> eigenvalues; // descending
  Matrix components;               // columns are principal directions
  std::vector<double> evr;         // eigenvalue / sum(eigenvalues)
  std::vector<double> cum_evr;     // running sum, ends at 1

  std::size_t n_components() const { return eigenvalues.size(); }
};

// Center, decompose the 1/N covariance, order by decreasing eigenvalue.
// Throws ZeroVariance when every column is constant.
PcaModel fit_pca(const Matrix& x);

// Factor scores (x - means) * components[:, 0..k). Throws DimensionMismatch /
// KOutOfRange.
Matrix pca_transform(const PcaModel& model, const Matrix& x, std::size_t k);

// scores * components[:, 0..k)^T + means.
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& scores);

// Smallest k with cum_evr[k-1] >= target.
std::size_t select_components(const PcaModel& model, double target_cum_evr);

std::string pca_to_json_text(const PcaModel& model);
PcaModel pca_from_json_text(const std::string& text);

}  // namespace insider
