#include "insider/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "insider/errors.hpp"
#include "insider/io_util.hpp"
#include "insider/rng.hpp"

namespace insider {

using nlohmann::json;

const char* label_name(Label l) {
  return l == Label::Lawful ? "lawful" : "unlawful";
}

Label parse_label(const std::string& s) {
  if (s == "lawful") return Label::Lawful;
  if (s == "unlawful") return Label::Unlawful;
  throw ConfigError("unknown label value: '" + s + "'");
}

int FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].name == name) return static_cast<int>(i);
  return -1;
}

void FeatureSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name.empty()) throw InvalidSpec("schema has an empty feature name");
    if (!seen.insert(f.name).second)
      throw InvalidSpec("duplicate feature name: " + f.name);
    if (f.kind == FeatureKind::Categorical && f.cardinality < 2)
      throw InvalidSpec("categorical feature '" + f.name +
                        "' needs cardinality >= 2");
  }
}

FeatureSchema schema_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("schema JSON parse error: ") + e.what());
  }
  FeatureSchema schema;
  schema.id = j.value("name", "custom");
  for (const auto& f : j.at("features")) {
    FeatureSpec spec;
    spec.name = f.at("name").get<std::string>();
    const std::string kind = f.value("kind", "numeric");
    if (kind == "numeric") {
      spec.kind = FeatureKind::Numeric;
    } else if (kind == "categorical") {
      spec.kind = FeatureKind::Categorical;
      spec.cardinality = f.value("cardinality", 2);
    } else {
      throw ConfigError("unknown feature kind: " + kind);
    }
    spec.group = f.value("group", "");
    schema.features.push_back(std::move(spec));
  }
  schema.validate();
  return schema;
}

std::string schema_to_json_text(const FeatureSchema& schema) {
  json j;
  j["name"] = schema.id;
  j["features"] = json::array();
  for (const auto& f : schema.features) {
    json e;
    e["name"] = f.name;
    e["kind"] = f.kind == FeatureKind::Numeric ? "numeric" : "categorical";
    if (f.kind == FeatureKind::Categorical) e["cardinality"] = f.cardinality;
    e["group"] = f.group;
    j["features"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

void Dataset::validate() const {
  if (x.rows() != y.size())
    throw LengthMismatch("dataset has " + std::to_string(x.rows()) +
                         " rows but " + std::to_string(y.size()) + " labels");
  if (!x.all_finite()) throw NonFiniteInput("dataset has non-finite entries");
  if (!schema.features.empty() && schema.size() != x.cols())
    throw InvalidSpec("schema lists " + std::to_string(schema.size()) +
                      " features for a " + std::to_string(x.cols()) +
                      "-column matrix");
}

Dataset Dataset::subset_rows(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.schema = schema;
  out.normalized = normalized;
  out.x = Matrix(rows.size(), x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) out.x(i, c) = x(rows[i], c);
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

Dataset Dataset::subset_columns(const std::vector<std::size_t>& cols) const {
  Dataset out;
  out.normalized = normalized;
  out.y = y;
  out.x = Matrix(x.rows(), cols.size());
  out.schema.id = schema.id;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    for (std::size_t r = 0; r < x.rows(); ++r) out.x(r, k) = x(r, cols[k]);
    if (!schema.features.empty()) out.schema.features.push_back(schema.features[cols[k]]);
  }
  return out;
}

std::pair<Matrix, NormalizationParams> zscore_normalize(const Matrix& x) {
  if (!x.all_finite()) throw NonFiniteInput("zscore input has non-finite entries");
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  NormalizationParams params;
  params.means.resize(m);
  params.stds.resize(m);
  Matrix out = x;
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = x(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);  // population
    const double sd = std::sqrt(var);
    params.means[c] = mean;
    params.stds[c] = sd;
    const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
    for (std::size_t r = 0; r < n; ++r) out(r, c) = (x(r, c) - mean) * scale;
  }
  return {std::move(out), std::move(params)};
}

Matrix apply_normalization(const NormalizationParams& params, const Matrix& x) {
  if (params.means.size() != x.cols())
    throw DimensionMismatch("normalization params cover " +
                            std::to_string(params.means.size()) +
                            " columns, matrix has " + std::to_string(x.cols()));
  if (!x.all_finite()) throw NonFiniteInput("normalization input has non-finite entries");
  Matrix out = x;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double mean = params.means[c];
    const double scale = params.stds[c] > 0.0 ? 1.0 / params.stds[c] : 1.0;
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, c) = (x(r, c) - mean) * scale;
  }
  return out;
}

Matrix one_hot_encode(const std::vector<int>& values, int cardinality) {
  if (cardinality < 2) throw InvalidSpec("one-hot cardinality must be >= 2");
  for (int v : values)
    if (v < 0 || v >= cardinality)
      throw UnknownCategory("value " + std::to_string(v) +
                            " outside cardinality " + std::to_string(cardinality));
  // binary flags become one 0/1 column (indicator of category 0) to avoid a
  // perfectly collinear duplicate pair
  if (cardinality == 2) {
    Matrix out(values.size(), 1);
    for (std::size_t r = 0; r < values.size(); ++r)
      out(r, 0) = values[r] == 0 ? 1.0 : 0.0;
    return out;
  }
  Matrix out(values.size(), static_cast<std::size_t>(cardinality));
  for (std::size_t r = 0; r < values.size(); ++r)
    out(r, static_cast<std::size_t>(values[r])) = 1.0;
  return out;
}

FilledPanel fill_missing(const std::vector<PanelRecord>& panel, int window) {
  if (window < 1 || window > 3)
    throw InvalidSpec("fill window must be in [1, 3], got " + std::to_string(window));
  std::map<std::pair<std::string, int>, std::size_t> by_key;
  for (std::size_t i = 0; i < panel.size(); ++i)
    by_key[{panel[i].entity, panel[i].quarter}] = i;

  FilledPanel out;
  out.records = panel;
  out.excluded.assign(panel.size(), false);
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    auto& rec = out.records[i];
    bool incomplete = false;
    for (std::size_t v = 0; v < rec.values.size(); ++v) {
      if (rec.values[v].has_value()) continue;
      for (int dq = 1; dq <= window && !rec.values[v].has_value(); ++dq) {
        const auto it = by_key.find({rec.entity, rec.quarter + dq});
        if (it == by_key.end()) continue;
        const auto& donor = panel[it->second];
        if (v < donor.values.size() && donor.values[v].has_value())
          rec.values[v] = donor.values[v];
      }
      if (!rec.values[v].has_value()) incomplete = true;
    }
    out.excluded[i] = incomplete;
  }
  return out;
}

Dataset balanced_sample(const Dataset& unlawful, const Dataset& lawful_pool,
                        std::size_t n_total, std::uint64_t seed) {
  if (n_total == 0 || n_total % 2 != 0)
    throw InvalidSpec("n_total must be positive and even, got " + std::to_string(n_total));
  const std::size_t half = n_total / 2;
  if (unlawful.n_rows() < half)
    throw InsufficientPool("need " + std::to_string(half) + " unlawful rows, pool has " +
                           std::to_string(unlawful.n_rows()));
  if (lawful_pool.n_rows() < half)
    throw InsufficientPool("need " + std::to_string(half) + " lawful rows, pool has " +
                           std::to_string(lawful_pool.n_rows()));
  if (unlawful.n_features() != lawful_pool.n_features())
    throw DimensionMismatch("pool feature counts differ");

  Rng rng(hash_seed(seed, stream::kSample));
  const auto pick_u = rng.sample_without_replacement(unlawful.n_rows(), half);
  const auto pick_l = rng.sample_without_replacement(lawful_pool.n_rows(), half);

  Dataset out;
  out.schema = unlawful.schema.features.empty() ? lawful_pool.schema : unlawful.schema;
  out.normalized = false;
  out.x = Matrix(n_total, unlawful.n_features());
  out.y.resize(n_total);
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t c = 0; c < out.x.cols(); ++c) out.x(i, c) = unlawful.x(pick_u[i], c);
    out.y[i] = Label::Unlawful;
  }
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t c = 0; c < out.x.cols(); ++c)
      out.x(half + i, c) = lawful_pool.x(pick_l[i], c);
    out.y[half + i] = Label::Lawful;
  }
  return out;
}

std::pair<Dataset, Dataset> split_by_label(const Dataset& d) {
  std::vector<std::size_t> unlaw, law;
  for (std::size_t i = 0; i < d.n_rows(); ++i)
    (d.y[i] == Label::Unlawful ? unlaw : law).push_back(i);
  return {d.subset_rows(unlaw), d.subset_rows(law)};
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& d,
                                             double train_fraction,
                                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidSpec("train fraction must lie in (0, 1)");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < d.n_rows(); ++i)
    by_class[static_cast<std::size_t>(d.y[i])].push_back(i);

  Rng rng(hash_seed(seed, stream::kSplit));
  std::vector<std::size_t> train_rows, test_rows;
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    rng.shuffle(rows);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(rows.size())));
    if (n_train == 0 || n_train == rows.size())
      throw DegenerateSplit("a split would receive zero rows of a class");
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {d.subset_rows(train_rows), d.subset_rows(test_rows)};
}

Dataset generate_synthetic(std::size_t n, std::size_t m,
                           std::size_t n_informative, double class_separation,
                           std::size_t correlated_groups, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0)
    throw InvalidSpec("synthetic row count must be even and >= 2");
  if (m == 0 || n_informative == 0 || n_informative > m)
    throw InvalidSpec("need 1 <= n_informative <= m");
  if (correlated_groups > n_informative || n_informative + correlated_groups > m)
    throw InvalidSpec("correlated groups must fit beside the informative columns");
  if (!(class_separation >= 0.0))
    throw InvalidSpec("class separation must be >= 0");

  Rng rng(hash_seed(seed, stream::kSynth));
  Dataset out;
  out.x = Matrix(n, m);
  out.y.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.y[i] = i < n / 2 ? Label::Lawful : Label::Unlawful;

  for (std::size_t r = 0; r < n; ++r) {
    const double shift = out.y[r] == Label::Unlawful ? class_separation : 0.0;
    for (std::size_t c = 0; c < n_informative; ++c) out.x(r, c) = rng.normal() + shift;
    for (std::size_t c = n_informative + correlated_groups; c < m; ++c)
      out.x(r, c) = rng.normal();
  }
  // near-duplicates of the first `correlated_groups` informative columns
  for (std::size_t g = 0; g < correlated_groups; ++g) {
    const std::size_t c = n_informative + g;
    for (std::size_t r = 0; r < n; ++r) out.x(r, c) = out.x(r, g) + 0.05 * rng.normal();
  }

  // shuffle rows so position does not encode the label
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  Dataset shuffled = out.subset_rows(perm);

  shuffled.schema.id = "synthetic";
  for (std::size_t c = 0; c < m; ++c) {
    FeatureSpec f;
    if (c < n_informative) {
      f.name = "signal_" + std::to_string(c);
      f.group = "Signal";
    } else if (c < n_informative + correlated_groups) {
      f.name = "signal_" + std::to_string(c - n_informative) + "_dup";
      f.group = "SignalDup";
    } else {
      f.name = "noise_" + std::to_string(c - n_informative - correlated_groups);
      f.group = "Noise";
    }
    shuffled.schema.features.push_back(std::move(f));
  }
  return shuffled;
}

Dataset read_feature_csv(const std::string& path, const std::string& schema_id) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw EmptyInput("feature CSV is empty: " + path);
  const auto header = csv_split_line(line);
  if (header.size() < 2 || header.back() != "label")
    throw ConfigError("feature CSV must end with a 'label' column: " + path);

  Dataset d;
  d.schema.id = schema_id;
  for (std::size_t c = 0; c + 1 < header.size(); ++c) {
    FeatureSpec f;
    f.name = header[c];
    d.schema.features.push_back(std::move(f));
  }

  std::vector<double> values;
  std::size_t n_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = csv_split_line(line);
    if (fields.size() != header.size())
      throw ConfigError("row " + std::to_string(n_rows + 2) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    for (std::size_t c = 0; c + 1 < fields.size(); ++c) {
      try {
        values.push_back(std::stod(fields[c]));
      } catch (const std::exception&) {
        throw ConfigError("bad numeric value '" + fields[c] + "' at row " +
                          std::to_string(n_rows + 2));
      }
    }
    d.y.push_back(parse_label(fields.back()));
    ++n_rows;
  }
  d.x = Matrix(n_rows, d.schema.size());
  d.x.data() = std::move(values);
  d.validate();
  return d;
}

void write_feature_csv(const std::string& path, const Dataset& d) {
  std::string out;
  for (std::size_t c = 0; c < d.schema.size(); ++c) {
    out += csv_escape(d.schema.features[c].name);
    out += ',';
  }
  out += "label\n";
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (std::size_t c = 0; c < d.x.cols(); ++c) {
      out += format_double(d.x(r, c));
      out += ',';
    }
    out += label_name(d.y[r]);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace insider
