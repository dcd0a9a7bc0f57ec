#include "insider/pca.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "insider/errors.hpp"
#include "insider/linalg.hpp"

namespace insider {

using nlohmann::json;

PcaModel fit_pca(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  if (n < 2) throw TooFewRows("pca needs at least 2 rows, got " + std::to_string(n));
  if (!x.all_finite()) throw NonFiniteInput("pca input has non-finite entries");

  PcaModel model;
  model.means.resize(m);
  Matrix centered = x;
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    model.means[c] = mean;
    for (std::size_t r = 0; r < n; ++r) centered(r, c) -= mean;
  }

  const SymmetricMatrix cov = covariance_matrix(centered);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += cov(i, i);
  if (total <= 0.0) throw ZeroVariance("every column is constant");

  EigenDecomposition eig = symmetric_eigen(cov);
  model.eigenvalues = std::move(eig.values);
  model.components = std::move(eig.vectors);

  double sum = 0.0;
  for (double v : model.eigenvalues) sum += v;
  model.evr.resize(m);
  model.cum_evr.resize(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    model.evr[i] = model.eigenvalues[i] / sum;
    running += model.evr[i];
    model.cum_evr[i] = running;
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x, std::size_t k) {
  const std::size_t m = model.means.size();
  if (x.cols() != m)
    throw DimensionMismatch("model covers " + std::to_string(m) +
                            " columns, input has " + std::to_string(x.cols()));
  if (k < 1 || k > model.n_components())
    throw KOutOfRange("k = " + std::to_string(k) + " outside [1, " +
                      std::to_string(model.n_components()) + "]");
  Matrix scores(x.rows(), k);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c)
        s += (x(r, c) - model.means[c]) * model.components(c, j);
      scores(r, j) = s;
    }
  }
  return scores;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& scores) {
  const std::size_t m = model.means.size();
  const std::size_t k = scores.cols();
  if (k > model.n_components())
    throw KOutOfRange("scores have more columns than the model has components");
  Matrix out(scores.rows(), m);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      double v = model.means[c];
      for (std::size_t j = 0; j < k; ++j) v += scores(r, j) * model.components(c, j);
      out(r, c) = v;
    }
  }
  return out;
}

std::size_t select_components(const PcaModel& model, double target_cum_evr) {
  if (!(target_cum_evr > 0.0 && target_cum_evr <= 1.0))
    throw ConfigError("cumulative EVR target must lie in (0, 1]");
  for (std::size_t k = 0; k < model.cum_evr.size(); ++k) {
    if (model.cum_evr[k] >= target_cum_evr - 1e-12) return k + 1;
  }
  return model.cum_evr.size();
}

std::string pca_to_json_text(const PcaModel& model) {
  json j;
  j["means"] = model.means;
  j["eigenvalues"] = model.eigenvalues;
  j["evr"] = model.evr;
  json rows = json::array();
  for (std::size_t r = 0; r < model.components.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < model.components.cols(); ++c)
      row.push_back(model.components(r, c));
    rows.push_back(std::move(row));
  }
  j["components"] = std::move(rows);
  return j.dump(2) + "\n";
}

PcaModel pca_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("pca model JSON parse error: ") + e.what());
  }
  PcaModel model;
  model.means = j.at("means").get<std::vector<double>>();
  model.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
  model.evr = j.at("evr").get<std::vector<double>>();
  const auto& rows = j.at("components");
  const std::size_t m = rows.size();
  if (m != model.means.size())
    throw ConfigError("pca model component row count does not match means");
  model.components = Matrix(m, m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c)
      model.components(r, c) = rows[r][c].get<double>();
  model.cum_evr.resize(model.evr.size());
  double running = 0.0;
  for (std::size_t i = 0; i < model.evr.size(); ++i) {
    running += model.evr[i];
    model.cum_evr[i] = running;
  }
  return model;
}

}  // namespace insider
