#include "insider/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "insider/errors.hpp"
#include "insider/io_util.hpp"
#include "insider/pca.hpp"
#include "insider/rng.hpp"

namespace insider {

using nlohmann::json;

ConfusionMatrix confusion_matrix(const std::vector<Label>& y_true,
                                 const std::vector<Label>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw LengthMismatch("truth has " + std::to_string(y_true.size()) +
                         " labels, predictions " + std::to_string(y_pred.size()));
  if (y_true.empty()) throw EmptyInput("confusion matrix over zero rows");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == Label::Lawful)
      (y_pred[i] == Label::Lawful ? cm.tp : cm.fn)++;
    else
      (y_pred[i] == Label::Lawful ? cm.fp : cm.tn)++;
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw EmptyInput("empty confusion matrix");
  MetricsReport r;
  const auto rate = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;  // undefined, never silent 0/0
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.tpr = rate(cm.tp, cm.tp + cm.fn);
  r.fnr = rate(cm.fn, cm.tp + cm.fn);
  r.fpr = rate(cm.fp, cm.fp + cm.tn);
  r.tnr = rate(cm.tn, cm.tn + cm.fp);
  r.acc = rate(cm.tp + cm.tn, cm.total());
  r.pre = rate(cm.tp, cm.tp + cm.fp);
  return r;
}

double roc_auc(const std::vector<Label>& y_true, const std::vector<double>& scores) {
  if (y_true.size() != scores.size())
    throw LengthMismatch("labels and scores differ in length");
  if (y_true.empty()) throw EmptyInput("roc_auc over zero rows");
  std::size_t n_pos = 0, n_neg = 0;  // unlawful / lawful
  for (auto l : y_true) (l == Label::Unlawful ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw SingleClass("roc_auc needs both classes present");

  std::vector<std::size_t> idx(y_true.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney sum: for each Unlawful row, lawful rows strictly below plus
  // half the lawful rows tied with it. Counts and halves are exact in binary,
  // so this matches brute-force pair counting bit for bit.
  double u = 0.0;
  double lawful_below = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::int64_t lawful_here = 0, unlawful_here = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (y_true[idx[j]] == Label::Lawful ? lawful_here : unlawful_here)++;
      ++j;
    }
    u += static_cast<double>(unlawful_here) *
         (lawful_below + 0.5 * static_cast<double>(lawful_here));
    lawful_below += static_cast<double>(lawful_here);
    i = j;
  }
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double pr_auc(const std::vector<Label>& y_true, const std::vector<double>& scores) {
  if (y_true.size() != scores.size())
    throw LengthMismatch("labels and scores differ in length");
  if (y_true.empty()) throw EmptyInput("pr_auc over zero rows");
  std::int64_t n_pos = 0;
  for (auto l : y_true)
    if (l == Label::Unlawful) ++n_pos;
  if (n_pos == 0) throw NoPositiveClass("pr_auc needs at least one Unlawful row");

  std::vector<std::size_t> idx(y_true.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // step-wise interpolation: at each distinct threshold, precision times the
  // recall gained since the previous threshold
  double area = 0.0;
  double prev_recall = 0.0;
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (y_true[idx[j]] == Label::Unlawful ? tp : fp)++;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                  std::uint64_t seed) {
  if (k < 2) throw BadK("k must be >= 2, got " + std::to_string(k));
  if (n < k) throw BadK("cannot split " + std::to_string(n) + " rows into " +
                        std::to_string(k) + " folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(hash_seed(seed, stream::kFolds));
  rng.shuffle(idx);

  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                    idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

void SearchSpace::validate() const {
  if (ntrees_min < 1 || ntrees_max < ntrees_min)
    throw ConfigError("bad ntrees range");
  if (!(mtry_min > 0.0 && mtry_min <= mtry_max && mtry_max <= 1.0))
    throw ConfigError("bad mtry range");
  if (depth_min < 1 || depth_max < depth_min) throw ConfigError("bad depth range");
  if (!(rate_min > 0.0 && rate_min <= rate_max && rate_max <= 1.0))
    throw ConfigError("bad sample rate range");
  if (n_iterations < 1) throw ConfigError("need at least one search iteration");
  if (k_folds < 2) throw BadK("k_folds must be >= 2");
}

namespace {

double score_fold(const RandomForestModel& model, const Dataset& fold,
                  Criterion criterion) {
  if (criterion == Criterion::Accuracy) return accuracy(model, fold);
  const auto preds = predict_all(model, fold.x);
  std::vector<double> scores(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    scores[i] = preds[i].unlawful_vote_fraction;
  return roc_auc(fold.y, scores);
}

}  // namespace

SearchResult random_search(const SearchSpace& space, const Dataset& train,
                           std::uint64_t seed, Criterion criterion,
                           unsigned workers) {
  space.validate();
  train.validate();
  const auto folds = kfold_split(train.n_rows(),
                                 static_cast<std::size_t>(space.k_folds), seed);

  SearchResult result;
  double best_score = -1.0;
  for (int iter = 0; iter < space.n_iterations; ++iter) {
    const std::uint64_t iter_seed =
        hash_seed(seed, stream::kSearch, static_cast<std::uint64_t>(iter));
    Rng rng(iter_seed);
    HyperParams draw;
    draw.ntrees = static_cast<int>(rng.uniform_int(space.ntrees_min, space.ntrees_max));
    draw.mtry_fraction = rng.uniform(space.mtry_min, space.mtry_max);
    draw.max_depth = static_cast<int>(rng.uniform_int(space.depth_min, space.depth_max));
    draw.sample_rate = rng.uniform(space.rate_min, space.rate_max);

    double sum = 0.0;
    bool failed = false;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> train_rows;
      for (std::size_t g = 0; g < folds.size(); ++g)
        if (g != f)
          train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
      std::sort(train_rows.begin(), train_rows.end());

      HyperParams fold_params = draw;
      fold_params.seed = hash_seed(iter_seed, f);
      try {
        const auto model =
            fit_forest(train.subset_rows(train_rows), fold_params, workers);
        sum += score_fold(model, train.subset_rows(folds[f]), criterion);
      } catch (const Error& e) {
        std::clog << "random_search: draw " << iter << " fold " << f
                  << " failed: " << e.what() << "\n";
        failed = true;
        break;
      }
    }
    if (failed) {
      ++result.failed_draws;
      continue;
    }
    const double score = sum / static_cast<double>(folds.size());
    if (score > best_score) {
      best_score = score;
      result.best = draw;
      result.best_score = score;
      result.best_iteration = iter;
    }
  }
  if (result.best_iteration < 0)
    throw ConfigError("random search: every draw failed");
  return result;
}

PcaMode PcaMode::evr(double target) {
  PcaMode m;
  m.kind = Kind::EvrThreshold;
  m.evr_target = target;
  return m;
}

PcaMode PcaMode::fixed(std::size_t k) {
  PcaMode m;
  m.kind = Kind::FixedK;
  m.fixed_k = k;
  return m;
}

PcaMode PcaMode::parse(const std::string& text) {
  if (text == "off") return off();
  if (text.rfind("evr=", 0) == 0) {
    const double target = std::strtod(text.c_str() + 4, nullptr);
    if (!(target > 0.0 && target <= 1.0))
      throw ConfigError("pca evr target must lie in (0, 1]: " + text);
    return evr(target);
  }
  if (text.rfind("k=", 0) == 0) {
    const long k = std::strtol(text.c_str() + 2, nullptr, 10);
    if (k < 1) throw ConfigError("pca k must be >= 1: " + text);
    return fixed(static_cast<std::size_t>(k));
  }
  throw ConfigError("pca mode must be off, evr=<r> or k=<int>: " + text);
}

std::string PcaMode::to_string() const {
  switch (kind) {
    case Kind::Off: return "off";
    case Kind::EvrThreshold: return "evr=" + format_double(evr_target);
    case Kind::FixedK: return "k=" + std::to_string(fixed_k);
  }
  return "off";
}

void ExperimentConfig::validate() const {
  if (csv_path.has_value() == synthetic.has_value())
    throw ConfigError("config needs exactly one dataset source (csv or synthetic)");
  if (n_transactions < 4 || n_transactions % 2 != 0)
    throw ConfigError("n_transactions must be even and >= 4");
  if (reps < 1) throw ConfigError("reps must be >= 1");
  space.validate();
}

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config JSON parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    const auto& src = j.at("dataset");
    if (src.contains("csv")) {
      cfg.csv_path = src.at("csv").get<std::string>();
    }
    if (src.contains("synthetic")) {
      const auto& s = src.at("synthetic");
      SyntheticSpec spec;
      spec.m = s.value("m", spec.m);
      spec.n_informative = s.value("informative", spec.n_informative);
      spec.class_separation = s.value("separation", spec.class_separation);
      spec.correlated_groups = s.value("correlated_groups", spec.correlated_groups);
      spec.lawful_pool_factor = s.value("lawful_pool_factor", spec.lawful_pool_factor);
      cfg.synthetic = spec;
    }
    cfg.n_transactions = j.value("n_transactions", cfg.n_transactions);
    if (j.contains("features") && j.at("features").is_array())
      cfg.feature_subset = j.at("features").get<std::vector<std::string>>();
    if (j.contains("pca")) {
      const auto& p = j.at("pca");
      if (p.is_string()) cfg.pca = PcaMode::parse(p.get<std::string>());
      else if (p.contains("evr")) cfg.pca = PcaMode::evr(p.at("evr").get<double>());
      else if (p.contains("k")) cfg.pca = PcaMode::fixed(p.at("k").get<std::size_t>());
      else throw ConfigError("bad pca mode in config");
    }
    if (j.contains("search")) {
      const auto& s = j.at("search");
      if (s.contains("ntrees")) {
        cfg.space.ntrees_min = s.at("ntrees")[0].get<int>();
        cfg.space.ntrees_max = s.at("ntrees")[1].get<int>();
      }
      if (s.contains("mtry")) {
        cfg.space.mtry_min = s.at("mtry")[0].get<double>();
        cfg.space.mtry_max = s.at("mtry")[1].get<double>();
      }
      if (s.contains("max_depth")) {
        cfg.space.depth_min = s.at("max_depth")[0].get<int>();
        cfg.space.depth_max = s.at("max_depth")[1].get<int>();
      }
      if (s.contains("sample_rate")) {
        cfg.space.rate_min = s.at("sample_rate")[0].get<double>();
        cfg.space.rate_max = s.at("sample_rate")[1].get<double>();
      }
      cfg.space.n_iterations = s.value("iterations", cfg.space.n_iterations);
      cfg.space.k_folds = s.value("folds", cfg.space.k_folds);
    }
    cfg.reps = j.value("reps", cfg.reps);
    cfg.master_seed = j.value("seed", cfg.master_seed);
    if (j.contains("criterion")) {
      const std::string c = j.at("criterion").get<std::string>();
      if (c == "acc") cfg.criterion = Criterion::Accuracy;
      else if (c == "auc") cfg.criterion = Criterion::Auc;
      else throw ConfigError("criterion must be acc or auc, got " + c);
    }
    cfg.workers = j.value("workers", cfg.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::pair<Dataset, Dataset> build_experiment_pool(const ExperimentConfig& config) {
  Dataset pool;
  if (config.csv_path) {
    pool = read_feature_csv(*config.csv_path);
    if (!config.feature_subset.empty()) {
      std::vector<std::size_t> cols;
      for (const auto& name : config.feature_subset) {
        const int idx = pool.schema.index_of(name);
        if (idx < 0) throw ConfigError("feature '" + name + "' not in " + *config.csv_path);
        cols.push_back(static_cast<std::size_t>(idx));
      }
      pool = pool.subset_columns(cols);
    }
  } else {
    const SyntheticSpec& s = *config.synthetic;
    const std::size_t half = config.n_transactions / 2;
    const auto lawful_pool_count = static_cast<std::size_t>(
        std::ceil(s.lawful_pool_factor * static_cast<double>(half)));
    pool = generate_synthetic(2 * lawful_pool_count, s.m, s.n_informative,
                              s.class_separation, s.correlated_groups,
                              config.master_seed);
  }

  auto [unlawful, lawful] = split_by_label(pool);
  const std::size_t half = config.n_transactions / 2;
  if (unlawful.n_rows() < half)
    throw InsufficientPool("pool holds " + std::to_string(unlawful.n_rows()) +
                           " unlawful rows, need " + std::to_string(half));
  if (config.synthetic && unlawful.n_rows() > half) {
    // keep the unlawful side literally fixed at n/2 rows, like the fixed
    // defendant-matched set the lawful pool is resampled against
    std::vector<std::size_t> keep(half);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    unlawful = unlawful.subset_rows(keep);
  }
  return {std::move(unlawful), std::move(lawful)};
}

namespace {

RepResult run_single_rep(const Dataset& unlawful, const Dataset& lawful_pool,
                         const ExperimentConfig& config, int rep,
                         std::uint64_t rep_seed) {
  RepResult result;
  result.rep = rep;
  result.seed = rep_seed;

  const Dataset sample =
      balanced_sample(unlawful, lawful_pool, config.n_transactions, rep_seed);
  auto [train, test] = train_test_split(sample, 0.8, rep_seed);

  auto [train_x, norm] = zscore_normalize(train.x);
  Matrix test_x = apply_normalization(norm, test.x);

  Dataset train_d, test_d;
  train_d.y = std::move(train.y);
  test_d.y = std::move(test.y);
  train_d.normalized = test_d.normalized = true;

  if (config.pca.kind == PcaMode::Kind::Off) {
    train_d.x = std::move(train_x);
    test_d.x = std::move(test_x);
    train_d.schema = train.schema;
    test_d.schema = train_d.schema;
  } else {
    const PcaModel pca = fit_pca(train_x);
    std::size_t k = config.pca.kind == PcaMode::Kind::FixedK
                        ? config.pca.fixed_k
                        : select_components(pca, config.pca.evr_target);
    k = std::min(k, pca.n_components());
    train_d.x = pca_transform(pca, train_x, k);
    test_d.x = pca_transform(pca, test_x, k);
    for (std::size_t i = 0; i < k; ++i) {
      FeatureSpec f;
      f.name = "pc_" + std::to_string(i);
      f.group = "PCA";
      train_d.schema.features.push_back(f);
    }
    train_d.schema.id = "pca";
    test_d.schema = train_d.schema;
  }

  const SearchResult search =
      random_search(config.space, train_d, rep_seed, config.criterion, config.workers);
  result.params = search.best;
  result.params.seed = hash_seed(rep_seed, 0x66696e616cULL);  // final fit stream

  const RandomForestModel model = fit_forest(train_d, result.params, config.workers);

  const auto preds = predict_all(model, test_d.x);
  std::vector<Label> y_pred(preds.size());
  std::vector<double> scores(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    y_pred[i] = preds[i].label;
    scores[i] = preds[i].unlawful_vote_fraction;
  }
  result.cm = confusion_matrix(test_d.y, y_pred);
  result.report = metrics(result.cm);
  result.report.auc = roc_auc(test_d.y, scores);
  result.report.aucpr = pr_auc(test_d.y, scores);
  result.oob = oob_error(model, train_d);
  return result;
}

}  // namespace

ExperimentResult run_experiments(const ExperimentConfig& config) {
  config.validate();
  const auto [unlawful, lawful_pool] = build_experiment_pool(config);

  ExperimentResult out;
  out.reps.resize(static_cast<std::size_t>(config.reps));
  for (int rep = 0; rep < config.reps; ++rep) {
    const std::uint64_t rep_seed =
        hash_seed(config.master_seed, stream::kRep, static_cast<std::uint64_t>(rep));
    auto& slot = out.reps[static_cast<std::size_t>(rep)];
    try {
      slot = run_single_rep(unlawful, lawful_pool, config, rep, rep_seed);
    } catch (const Error& e) {
      slot.rep = rep;
      slot.seed = rep_seed;
      slot.failed = true;
      slot.error = e.code();
      ++out.failures;
      std::clog << "run_experiments: rep " << rep << " failed: " << e.what() << "\n";
    }
  }
  return out;
}

namespace {

std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : "NA";
}

}  // namespace

std::string ExperimentResult::per_rep_csv() const {
  std::string out =
      "rep,seed,ntrees,mtry,max_depth,sample_rate,tp,fn,fp,tn,acc,tpr,fpr,tnr,"
      "fnr,pre,auc\n";
  for (const auto& r : reps) {
    if (r.failed) continue;
    out += std::to_string(r.rep);
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += std::to_string(r.params.ntrees);
    out += ',';
    out += format_double(r.params.mtry_fraction.value_or(0.0));
    out += ',';
    out += std::to_string(r.params.max_depth);
    out += ',';
    out += format_double(r.params.sample_rate);
    out += ',';
    out += std::to_string(r.cm.tp);
    out += ',';
    out += std::to_string(r.cm.fn);
    out += ',';
    out += std::to_string(r.cm.fp);
    out += ',';
    out += std::to_string(r.cm.tn);
    out += ',';
    out += opt_field(r.report.acc);
    out += ',';
    out += opt_field(r.report.tpr);
    out += ',';
    out += opt_field(r.report.fpr);
    out += ',';
    out += opt_field(r.report.tnr);
    out += ',';
    out += opt_field(r.report.fnr);
    out += ',';
    out += opt_field(r.report.pre);
    out += ',';
    out += opt_field(r.report.auc);
    out += '\n';
  }
  return out;
}

std::vector<double> ExperimentResult::metric_values(const char* name) const {
  std::vector<double> out;
  const std::string key(name);
  for (const auto& r : reps) {
    if (r.failed) continue;
    std::optional<double> v;
    if (key == "acc") v = r.report.acc;
    else if (key == "tpr") v = r.report.tpr;
    else if (key == "fpr") v = r.report.fpr;
    else if (key == "tnr") v = r.report.tnr;
    else if (key == "fnr") v = r.report.fnr;
    else if (key == "pre") v = r.report.pre;
    else if (key == "auc") v = r.report.auc;
    else if (key == "aucpr") v = r.report.aucpr;
    else if (key == "oob") v = r.oob;
    if (v) out.push_back(*v);
  }
  return out;
}

double ExperimentResult::mean_metric(double RepResult::*field) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reps) {
    if (r.failed) continue;
    sum += r.*field;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::string ExperimentResult::aggregate_json() const {
  json j;
  j["reps"] = reps.size();
  j["failed_reps"] = failures;

  const char* names[] = {"acc", "tpr", "fpr", "tnr", "fnr", "pre", "auc", "aucpr", "oob"};
  json metrics_json;
  for (const char* name : names) {
    const auto values = metric_values(name);
    if (values.empty()) continue;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());  // population
    json entry;
    entry["mean"] = mean;
    entry["std"] = std::sqrt(var);
    entry["n"] = values.size();
    metrics_json[name] = std::move(entry);
  }
  j["metrics"] = std::move(metrics_json);

  // modal chosen parameters; ties keep the earliest rep
  std::map<std::string, std::pair<std::size_t, const RepResult*>> tally;
  const RepResult* mode = nullptr;
  std::size_t mode_count = 0;
  for (const auto& r : reps) {
    if (r.failed) continue;
    const std::string key = std::to_string(r.params.ntrees) + "|" +
                            format_double(r.params.mtry_fraction.value_or(0.0)) + "|" +
                            std::to_string(r.params.max_depth) + "|" +
                            format_double(r.params.sample_rate);
    auto& slot = tally[key];
    if (slot.first == 0) slot.second = &r;
    slot.first++;
    if (slot.first > mode_count) {
      mode_count = slot.first;
      mode = slot.second;
    }
  }
  if (mode != nullptr) {
    json p;
    p["ntrees"] = mode->params.ntrees;
    p["mtry_fraction"] = mode->params.mtry_fraction.value_or(0.0);
    p["max_depth"] = mode->params.max_depth;
    p["sample_rate"] = mode->params.sample_rate;
    p["count"] = mode_count;
    j["chosen_params_mode"] = std::move(p);
  }
  return j.dump(2) + "\n";
}

}  // namespace insider
