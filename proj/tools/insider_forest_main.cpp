#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "insider/dataset.hpp"
#include "insider/errors.hpp"
#include "insider/evaluate.hpp"
#include "insider/form4.hpp"
#include "insider/forest.hpp"
#include "insider/importance.hpp"
#include "insider/io_util.hpp"
#include "insider/pca.hpp"
#include "insider/report.hpp"
#include "insider/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace insider;

namespace {

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

std::string find_data_file(const std::string& relative) {
  std::vector<fs::path> candidates;
  if (const char* env = std::getenv("INSIDER_DATA_DIR")) {
    candidates.emplace_back(fs::path(env) / relative);
  }
  candidates.emplace_back(fs::path("data") / relative);
  candidates.emplace_back(fs::path("../data") / relative);
  for (const auto& c : candidates)
    if (fs::exists(c)) return c.string();
  throw ConfigError("cannot locate data file '" + relative +
                    "' (set INSIDER_DATA_DIR or run from the project root)");
}

std::vector<std::string> subset_names_for(const std::string& features_flag) {
  std::string path = features_flag;
  if (features_flag == "dcz25" || features_flag == "full110")
    path = find_data_file("schemas/" + features_flag + ".json");
  const FeatureSchema schema = schema_from_json_text(read_file(path));
  std::vector<std::string> names;
  for (const auto& f : schema.features) names.push_back(f.name);
  return names;
}

// Stored model bundle: normalization + optional PCA + forest + feature names,
// so `evaluate` can replay the exact training-time preprocessing.
struct ModelBundle {
  std::optional<NormalizationParams> normalization;
  std::optional<PcaModel> pca;
  std::size_t pca_k = 0;
  RandomForestModel forest;
  std::vector<std::string> feature_names;
};

std::string bundle_to_json_text(const ModelBundle& b) {
  json j;
  if (b.normalization) {
    j["normalization"] = {{"means", b.normalization->means},
                          {"stds", b.normalization->stds}};
  } else {
    j["normalization"] = nullptr;
  }
  if (b.pca) {
    j["pca"] = json::parse(pca_to_json_text(*b.pca));
    j["pca_k"] = b.pca_k;
  } else {
    j["pca"] = nullptr;
  }
  j["forest"] = json::parse(forest_to_json_text(b.forest));
  j["feature_names"] = b.feature_names;
  return j.dump() + "\n";
}

ModelBundle bundle_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model bundle JSON parse error: ") + e.what());
  }
  ModelBundle b;
  if (!j.at("normalization").is_null()) {
    NormalizationParams p;
    p.means = j["normalization"]["means"].get<std::vector<double>>();
    p.stds = j["normalization"]["stds"].get<std::vector<double>>();
    b.normalization = std::move(p);
  }
  if (!j.at("pca").is_null()) {
    b.pca = pca_from_json_text(j["pca"].dump());
    b.pca_k = j.value("pca_k", std::size_t{0});
  }
  b.forest = forest_from_json_text(j.at("forest").dump());
  b.feature_names = j.value("feature_names", std::vector<std::string>{});
  return b;
}

Matrix bundle_transform(const ModelBundle& b, const Matrix& x) {
  Matrix out = x;
  if (b.normalization) out = apply_normalization(*b.normalization, out);
  if (b.pca) out = pca_transform(*b.pca, out, b.pca_k);
  return out;
}

json metrics_to_json(const MetricsReport& r, const ConfusionMatrix& cm) {
  json j;
  j["confusion"] = {{"tp", cm.tp}, {"fn", cm.fn}, {"fp", cm.fp}, {"tn", cm.tn}};
  const auto put = [&](const char* name, const std::optional<double>& v) {
    if (v) j[name] = *v;
    else j[name] = nullptr;
  };
  put("acc", r.acc);
  put("tpr", r.tpr);
  put("fpr", r.fpr);
  put("tnr", r.tnr);
  put("fnr", r.fnr);
  put("pre", r.pre);
  put("auc", r.auc);
  put("aucpr", r.aucpr);
  return j;
}

// ---------------------------------------------------------------------------
// shared option blocks
// ---------------------------------------------------------------------------

struct ForestOptions {
  int ntrees = 100;
  double mtry = 0.0;  // 0 = sqrt default
  int max_depth = kUnlimitedDepth;
  double sample_rate = 1.0;
  int min_split = 2;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--ntrees", ntrees, "number of trees");
    cmd->add_option("--mtry", mtry, "feature fraction per split (0 = sqrt default)");
    cmd->add_option("--max-depth", max_depth, "split levels allowed (-1 = unlimited)");
    cmd->add_option("--sample-rate", sample_rate, "bootstrap size fraction");
    cmd->add_option("--min-split", min_split, "minimum rows to split a node");
    cmd->add_option("--seed", seed, "random seed");
  }

  HyperParams params() const {
    HyperParams p;
    p.ntrees = ntrees;
    if (mtry > 0.0) p.mtry_fraction = mtry;
    p.max_depth = max_depth;
    p.sample_rate = sample_rate;
    p.min_samples_split = min_split;
    p.seed = seed;
    return p;
  }
};

// ---------------------------------------------------------------------------
// subcommand actions
// ---------------------------------------------------------------------------

int cmd_ingest(const std::vector<std::string>& inputs, const std::string& dir,
               const std::string& out) {
  std::vector<std::string> files = inputs;
  if (!dir.empty()) {
    if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".xml")
        files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw ConfigError("no input files given");

  std::vector<Transaction> all;
  std::size_t skipped = 0;
  for (const auto& f : files) {
    try {
      auto txns = parse_form4(read_file(f));
      all.insert(all.end(), txns.begin(), txns.end());
    } catch (const Error& e) {
      std::cerr << "skip " << f << ": " << e.what() << "\n";
      ++skipped;
    }
  }
  write_file_atomic(out, transactions_to_csv(all));
  std::cout << "ingested " << all.size() << " transactions from "
            << files.size() - skipped << " files (" << skipped << " skipped)\n";
  return 0;
}

int cmd_label(const std::string& txn_csv, const std::string& defendants_path,
              int threshold, const std::string& out) {
  auto txns = transactions_from_csv(read_file(txn_csv));
  const auto defendants = load_defendant_list(defendants_path);
  txns = label_transactions(std::move(txns), defendants, threshold);
  std::size_t unlawful = 0;
  for (const auto& t : txns)
    if (t.label == TxnLabel::Unlawful) ++unlawful;
  write_file_atomic(out, transactions_to_csv(txns));
  std::cout << "labeled " << txns.size() << " transactions, " << unlawful
            << " unlawful (threshold " << threshold << ")\n";
  return 0;
}

int cmd_featurize(const std::string& txn_csv, const std::string& out,
                  const std::string& schema_out) {
  const auto txns = transactions_from_csv(read_file(txn_csv));
  auto [dataset, dropped] = featurize_transactions(txns);
  if (dropped > 0)
    std::cerr << "dropped " << dropped << " unlabeled transactions\n";
  write_feature_csv(out, dataset);
  if (!schema_out.empty())
    write_file_atomic(schema_out, schema_to_json_text(dataset.schema));
  std::cout << "wrote " << dataset.n_rows() << " rows x " << dataset.n_features()
            << " features\n";
  return 0;
}

int cmd_synth(std::size_t n, std::size_t m, std::size_t informative,
              double separation, std::size_t groups, std::uint64_t seed,
              const std::string& out, const std::string& schema_out) {
  const Dataset d = generate_synthetic(n, m, informative, separation, groups, seed);
  write_feature_csv(out, d);
  if (!schema_out.empty())
    write_file_atomic(schema_out, schema_to_json_text(d.schema));
  std::cout << "wrote " << d.n_rows() << " rows x " << d.n_features()
            << " features\n";
  return 0;
}

int cmd_train(const std::string& data_csv, const ForestOptions& opts,
              const std::string& pca_mode, bool no_normalize,
              const std::string& model_out, unsigned workers) {
  Dataset d = read_feature_csv(data_csv);
  ModelBundle bundle;
  for (const auto& f : d.schema.features) bundle.feature_names.push_back(f.name);

  Matrix x = d.x;
  if (!no_normalize) {
    auto [normed, params] = zscore_normalize(x);
    x = std::move(normed);
    bundle.normalization = std::move(params);
  }
  const PcaMode mode = PcaMode::parse(pca_mode);
  if (mode.kind != PcaMode::Kind::Off) {
    PcaModel pca = fit_pca(x);
    std::size_t k = mode.kind == PcaMode::Kind::FixedK
                        ? mode.fixed_k
                        : select_components(pca, mode.evr_target);
    k = std::min(k, pca.n_components());
    x = pca_transform(pca, x, k);
    bundle.pca = std::move(pca);
    bundle.pca_k = k;
  }
  Dataset train_d;
  train_d.x = std::move(x);
  train_d.y = d.y;
  bundle.forest = fit_forest(train_d, opts.params(), workers);
  write_file_atomic(model_out, bundle_to_json_text(bundle));
  std::cout << "trained " << bundle.forest.trees.size() << " trees on "
            << train_d.n_rows() << " rows\n";
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_csv,
                 const std::string& tie_break, const std::string& out) {
  const ModelBundle bundle = bundle_from_json_text(read_file(model_path));
  const Dataset d = read_feature_csv(data_csv);
  const Matrix x = bundle_transform(bundle, d.x);

  const auto preds = predict_all(bundle.forest, x, tie_break != "lawful");
  std::vector<Label> y_pred(preds.size());
  std::vector<double> scores(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    y_pred[i] = preds[i].label;
    scores[i] = preds[i].unlawful_vote_fraction;
  }
  const ConfusionMatrix cm = confusion_matrix(d.y, y_pred);
  MetricsReport r = metrics(cm);
  try {
    r.auc = roc_auc(d.y, scores);
    r.aucpr = pr_auc(d.y, scores);
  } catch (const Error&) {
    // single-class evaluation data; rate metrics still stand
  }
  const std::string text = metrics_to_json(r, cm).dump(2) + "\n";
  if (out.empty()) std::cout << text;
  else write_file_atomic(out, text);
  return 0;
}

int cmd_tune(const std::string& data_csv, const SearchSpace& space,
             std::uint64_t seed, const std::string& criterion,
             const std::string& out, unsigned workers) {
  const Dataset d = read_feature_csv(data_csv);
  const Criterion crit = criterion == "auc" ? Criterion::Auc : Criterion::Accuracy;
  const SearchResult res = random_search(space, d, seed, crit, workers);
  json j;
  j["ntrees"] = res.best.ntrees;
  j["mtry_fraction"] = res.best.mtry_fraction.value_or(0.0);
  j["max_depth"] = res.best.max_depth;
  j["sample_rate"] = res.best.sample_rate;
  j["cv_score"] = res.best_score;
  j["iteration"] = res.best_iteration;
  j["failed_draws"] = res.failed_draws;
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) std::cout << text;
  else write_file_atomic(out, text);
  return 0;
}

int cmd_importance(const std::string& method, const std::string& model_path,
                   const std::string& data_csv, const std::string& train_csv,
                   const std::string& test_csv, const ForestOptions& opts,
                   double cluster_threshold, bool signed_distance, int repeats,
                   std::uint64_t seed, const std::string& out,
                   const std::string& dendrogram_out, unsigned workers) {
  ImportanceReport report;
  if (method == "mdi") {
    if (model_path.empty()) throw ConfigError("--model is required for --method mdi");
    const ModelBundle bundle = bundle_from_json_text(read_file(model_path));
    FeatureSchema schema;
    for (const auto& n : bundle.feature_names) {
      FeatureSpec f;
      f.name = n;
      schema.features.push_back(std::move(f));
    }
    if (bundle.pca) schema.features.clear();  // PC indices, not input features
    report = mdi_report(bundle.forest, schema);
  } else if (method == "permutation") {
    if (model_path.empty() || data_csv.empty())
      throw ConfigError("--model and --data are required for --method permutation");
    const ModelBundle bundle = bundle_from_json_text(read_file(model_path));
    Dataset d = read_feature_csv(data_csv);
    d.x = bundle_transform(bundle, d.x);
    report = permutation_importance(bundle.forest, d, repeats, seed,
                                    EvalSplit::Test, workers);
  } else if (method == "decorrelated") {
    if (train_csv.empty() || test_csv.empty())
      throw ConfigError("--train and --test are required for --method decorrelated");
    const Dataset train = read_feature_csv(train_csv);
    const Dataset test = read_feature_csv(test_csv);
    if (!dendrogram_out.empty()) {
      const auto corr = spearman_correlation(train.x);
      write_file_atomic(dendrogram_out,
                        ward_cluster(corr, signed_distance).to_json_text());
    }
    report = decorrelated_permutation_importance(train, test, opts.params(),
                                                 cluster_threshold, repeats, seed,
                                                 signed_distance, workers);
  } else {
    throw ConfigError("method must be mdi, permutation or decorrelated");
  }
  if (out.empty()) std::cout << report.to_csv();
  else write_file_atomic(out, report.to_csv());
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override,
            std::optional<int> reps_override, const std::string& pca_override,
            const std::string& features_override,
            const std::string& criterion_override,
            std::optional<unsigned> workers_override, double cluster_threshold,
            const std::string& reference_path) {
  ExperimentConfig cfg = experiment_config_from_json_text(read_file(config_path));
  if (seed_override) cfg.master_seed = *seed_override;
  if (reps_override) cfg.reps = *reps_override;
  if (!pca_override.empty()) cfg.pca = PcaMode::parse(pca_override);
  if (!features_override.empty())
    cfg.feature_subset = subset_names_for(features_override);
  if (!criterion_override.empty())
    cfg.criterion = criterion_override == "auc" ? Criterion::Auc : Criterion::Accuracy;
  if (workers_override) cfg.workers = *workers_override;
  cfg.validate();

  const ExperimentResult result = run_experiments(cfg);
  fs::create_directories(out_dir);
  write_file_atomic((fs::path(out_dir) / "per_rep.csv").string(), result.per_rep_csv());
  write_file_atomic((fs::path(out_dir) / "aggregate.json").string(),
                    result.aggregate_json());

  // one representative model for the importance artifacts, derived from the
  // rep-0 stream so the whole artifact set is reproducible from the seed
  const RepResult* chosen = nullptr;
  for (const auto& r : result.reps)
    if (!r.failed) {
      chosen = &r;
      break;
    }
  if (chosen != nullptr) {
    const auto [unlawful, lawful_pool] = build_experiment_pool(cfg);
    const std::uint64_t seed0 = chosen->seed;
    const Dataset sample = balanced_sample(unlawful, lawful_pool,
                                           cfg.n_transactions, seed0);
    auto [train, test] = train_test_split(sample, 0.8, seed0);
    auto [train_x, norm] = zscore_normalize(train.x);
    Dataset train_d;
    train_d.x = std::move(train_x);
    train_d.y = train.y;
    train_d.schema = train.schema;
    Dataset test_d;
    test_d.x = apply_normalization(norm, test.x);
    test_d.y = test.y;
    test_d.schema = train.schema;

    HyperParams params = chosen->params;
    const RandomForestModel model = fit_forest(train_d, params, cfg.workers);
    write_file_atomic((fs::path(out_dir) / "importance_mdi.csv").string(),
                      mdi_report(model, train_d.schema).to_csv());
    write_file_atomic(
        (fs::path(out_dir) / "importance_permutation_test.csv").string(),
        permutation_importance(model, test_d, 10, seed0, EvalSplit::Test,
                               cfg.workers)
            .to_csv());
    const auto corr = spearman_correlation(train_d.x);
    write_file_atomic((fs::path(out_dir) / "dendrogram.json").string(),
                      ward_cluster(corr).to_json_text());
    write_file_atomic(
        (fs::path(out_dir) / "importance_decorrelated_test.csv").string(),
        decorrelated_permutation_importance(train_d, test_d, params,
                                            cluster_threshold, 10, seed0, false,
                                            cfg.workers)
            .to_csv());
  }

  const std::string ref_path =
      reference_path.empty() ? find_data_file("reference_metrics.json") : reference_path;
  write_file_atomic((fs::path(out_dir) / "report.md").string(),
                    render_markdown_report(result, cfg, read_file(ref_path)));
  std::cout << "wrote artifacts to " << out_dir << " (" << result.failures
            << " failed reps)\n";
  return 0;
}

int cmd_report(const std::string& per_rep_path, const std::string& config_path,
               const std::string& reference_path, const std::string& out) {
  // rebuild the per-rep table from the CSV artifact
  const std::string text = read_file(per_rep_path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty per-rep CSV");
  ExperimentResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv_split_line(line);
    if (f.size() != 17) throw ConfigError("bad per-rep CSV row: " + line);
    RepResult r;
    r.rep = std::stoi(f[0]);
    r.seed = std::stoull(f[1]);
    r.params.ntrees = std::stoi(f[2]);
    r.params.mtry_fraction = std::stod(f[3]);
    r.params.max_depth = std::stoi(f[4]);
    r.params.sample_rate = std::stod(f[5]);
    r.cm.tp = std::stoll(f[6]);
    r.cm.fn = std::stoll(f[7]);
    r.cm.fp = std::stoll(f[8]);
    r.cm.tn = std::stoll(f[9]);
    r.report = metrics(r.cm);
    if (f[16] != "NA") r.report.auc = std::stod(f[16]);
    result.reps.push_back(std::move(r));
  }
  const ExperimentConfig cfg = experiment_config_from_json_text(read_file(config_path));
  const std::string ref_path =
      reference_path.empty() ? find_data_file("reference_metrics.json") : reference_path;
  const std::string md = render_markdown_report(result, cfg, read_file(ref_path));
  if (out.empty()) std::cout << md;
  else write_file_atomic(out, md);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"insider-forest: label, featurize and classify insider-trading "
               "transactions with a PCA + random-forest pipeline"};
  app.require_subcommand(1);

  int exit_code = 0;
  const auto run_guarded = [&exit_code](auto&& fn) {
    try {
      exit_code = fn();
    } catch (const Error& e) {
      std::cerr << e.what() << "\n";  // "<Class>: <message>", one line
      exit_code = e.exit_code();
    } catch (const std::exception& e) {
      std::cerr << "InternalError: " << e.what() << "\n";
      exit_code = 1;
    }
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse Form 4 XML files into a transactions CSV");
  auto ingest_inputs = std::make_shared<std::vector<std::string>>();
  auto ingest_dir = std::make_shared<std::string>();
  auto ingest_out = std::make_shared<std::string>();
  ingest->add_option("--input", *ingest_inputs, "XML files");
  ingest->add_option("--dir", *ingest_dir, "directory of .xml files");
  ingest->add_option("--out", *ingest_out, "output CSV")->required();
  ingest->callback([=, &run_guarded] {
    run_guarded([&] { return cmd_ingest(*ingest_inputs, *ingest_dir, *ingest_out); });
  });

  // label
  auto* label = app.add_subcommand("label", "assign lawful/unlawful labels by defendant matching");
  auto label_txns = std::make_shared<std::string>();
  auto label_defendants = std::make_shared<std::string>();
  auto label_threshold = std::make_shared<int>(85);
  auto label_out = std::make_shared<std::string>();
  label->add_option("--transactions", *label_txns, "transactions CSV")->required();
  label->add_option("--defendants", *label_defendants, "defendant list file")->required();
  label->add_option("--threshold", *label_threshold, "similarity threshold in [0,100]");
  label->add_option("--out", *label_out, "output CSV")->required();
  label->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_label(*label_txns, *label_defendants, *label_threshold, *label_out);
    });
  });

  // featurize
  auto* featurize = app.add_subcommand("featurize", "turn labeled transactions into a feature CSV");
  auto feat_txns = std::make_shared<std::string>();
  auto feat_out = std::make_shared<std::string>();
  auto feat_schema_out = std::make_shared<std::string>();
  featurize->add_option("--transactions", *feat_txns, "transactions CSV")->required();
  featurize->add_option("--out", *feat_out, "output feature CSV")->required();
  featurize->add_option("--schema-out", *feat_schema_out, "write schema JSON here");
  featurize->callback([=, &run_guarded] {
    run_guarded([&] { return cmd_featurize(*feat_txns, *feat_out, *feat_schema_out); });
  });

  // synth
  auto* synth = app.add_subcommand("synth", "generate a planted-signal synthetic feature CSV");
  auto synth_n = std::make_shared<std::size_t>(320);
  auto synth_m = std::make_shared<std::size_t>(25);
  auto synth_inf = std::make_shared<std::size_t>(5);
  auto synth_sep = std::make_shared<double>(1.0);
  auto synth_groups = std::make_shared<std::size_t>(0);
  auto synth_seed = std::make_shared<std::uint64_t>(0);
  auto synth_out = std::make_shared<std::string>();
  auto synth_schema_out = std::make_shared<std::string>();
  synth->add_option("--n", *synth_n, "rows (even)");
  synth->add_option("--m", *synth_m, "features");
  synth->add_option("--informative", *synth_inf, "informative features");
  synth->add_option("--separation", *synth_sep, "class separation");
  synth->add_option("--groups", *synth_groups, "correlated duplicate groups");
  synth->add_option("--seed", *synth_seed, "random seed");
  synth->add_option("--out", *synth_out, "output feature CSV")->required();
  synth->add_option("--schema-out", *synth_schema_out, "write schema JSON here");
  synth->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_synth(*synth_n, *synth_m, *synth_inf, *synth_sep, *synth_groups,
                       *synth_seed, *synth_out, *synth_schema_out);
    });
  });

  // train
  auto* train = app.add_subcommand("train", "fit a forest (with optional z-score + PCA) on a feature CSV");
  auto train_data = std::make_shared<std::string>();
  auto train_opts = std::make_shared<ForestOptions>();
  auto train_pca = std::make_shared<std::string>("off");
  auto train_no_norm = std::make_shared<bool>(false);
  auto train_model_out = std::make_shared<std::string>();
  auto train_workers = std::make_shared<unsigned>(0);
  train->add_option("--data", *train_data, "feature CSV")->required();
  train_opts->attach(train);
  train->add_option("--pca", *train_pca, "off | evr=<r> | k=<int>");
  train->add_flag("--no-normalize", *train_no_norm, "skip z-score normalization");
  train->add_option("--model-out", *train_model_out, "model bundle JSON")->required();
  train->add_option("--workers", *train_workers, "worker threads (0 = auto)");
  train->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_train(*train_data, *train_opts, *train_pca, *train_no_norm,
                       *train_model_out, *train_workers);
    });
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a stored model on a feature CSV");
  auto eval_model = std::make_shared<std::string>();
  auto eval_data = std::make_shared<std::string>();
  auto eval_tie = std::make_shared<std::string>("unlawful");
  auto eval_out = std::make_shared<std::string>();
  evaluate->add_option("--model", *eval_model, "model bundle JSON")->required();
  evaluate->add_option("--data", *eval_data, "feature CSV")->required();
  evaluate->add_option("--tie-break", *eval_tie, "class for 50/50 votes")
      ->check(CLI::IsMember({"unlawful", "lawful"}));
  evaluate->add_option("--out", *eval_out, "metrics JSON (stdout when omitted)");
  evaluate->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_evaluate(*eval_model, *eval_data, *eval_tie, *eval_out);
    });
  });

  // tune
  auto* tune = app.add_subcommand("tune", "random hyperparameter search with k-fold CV");
  auto tune_data = std::make_shared<std::string>();
  auto tune_space = std::make_shared<SearchSpace>();
  auto tune_seed = std::make_shared<std::uint64_t>(0);
  auto tune_criterion = std::make_shared<std::string>("acc");
  auto tune_out = std::make_shared<std::string>();
  auto tune_workers = std::make_shared<unsigned>(0);
  tune->add_option("--data", *tune_data, "feature CSV")->required();
  tune->add_option("--ntrees-min", tune_space->ntrees_min);
  tune->add_option("--ntrees-max", tune_space->ntrees_max);
  tune->add_option("--mtry-min", tune_space->mtry_min);
  tune->add_option("--mtry-max", tune_space->mtry_max);
  tune->add_option("--depth-min", tune_space->depth_min);
  tune->add_option("--depth-max", tune_space->depth_max);
  tune->add_option("--rate-min", tune_space->rate_min);
  tune->add_option("--rate-max", tune_space->rate_max);
  tune->add_option("--iterations", tune_space->n_iterations);
  tune->add_option("--folds", tune_space->k_folds);
  tune->add_option("--seed", *tune_seed, "random seed");
  tune->add_option("--criterion", *tune_criterion)
      ->check(CLI::IsMember({"acc", "auc"}));
  tune->add_option("--out", *tune_out, "best-params JSON (stdout when omitted)");
  tune->add_option("--workers", *tune_workers, "worker threads (0 = auto)");
  tune->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_tune(*tune_data, *tune_space, *tune_seed, *tune_criterion,
                      *tune_out, *tune_workers);
    });
  });

  // importance
  auto* importance = app.add_subcommand("importance", "feature importance reports");
  auto imp_method = std::make_shared<std::string>("permutation");
  auto imp_model = std::make_shared<std::string>();
  auto imp_data = std::make_shared<std::string>();
  auto imp_train = std::make_shared<std::string>();
  auto imp_test = std::make_shared<std::string>();
  auto imp_opts = std::make_shared<ForestOptions>();
  auto imp_cluster_threshold = std::make_shared<double>(1.0);
  auto imp_signed = std::make_shared<bool>(false);
  auto imp_repeats = std::make_shared<int>(10);
  auto imp_seed = std::make_shared<std::uint64_t>(0);
  auto imp_out = std::make_shared<std::string>();
  auto imp_dendro_out = std::make_shared<std::string>();
  auto imp_workers = std::make_shared<unsigned>(0);
  importance->add_option("--method", *imp_method)
      ->check(CLI::IsMember({"mdi", "permutation", "decorrelated"}));
  importance->add_option("--model", *imp_model, "model bundle (mdi, permutation)");
  importance->add_option("--data", *imp_data, "evaluation CSV (permutation)");
  importance->add_option("--train", *imp_train, "training CSV (decorrelated)");
  importance->add_option("--test", *imp_test, "held-out CSV (decorrelated)");
  imp_opts->attach(importance);
  importance->add_option("--cluster-threshold", *imp_cluster_threshold,
                         "dendrogram cut height");
  importance->add_flag("--signed-distance", *imp_signed,
                       "cluster on 1 - rho instead of 1 - |rho|");
  importance->add_option("--repeats", *imp_repeats, "permutation repeats");
  importance->add_option("--out", *imp_out, "report CSV (stdout when omitted)");
  importance->add_option("--dendrogram-out", *imp_dendro_out, "merge list JSON");
  importance->add_option("--workers", *imp_workers, "worker threads (0 = auto)");
  importance->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_importance(*imp_method, *imp_model, *imp_data, *imp_train,
                            *imp_test, *imp_opts, *imp_cluster_threshold,
                            *imp_signed, *imp_repeats, imp_opts->seed, *imp_out,
                            *imp_dendro_out, *imp_workers);
    });
  });

  // run
  auto* run = app.add_subcommand("run", "full experiment harness from a JSON config");
  auto run_config = std::make_shared<std::string>();
  auto run_out = std::make_shared<std::string>("out");
  auto run_seed = std::make_shared<std::optional<std::uint64_t>>();
  auto run_reps = std::make_shared<std::optional<int>>();
  auto run_pca = std::make_shared<std::string>();
  auto run_features = std::make_shared<std::string>();
  auto run_criterion = std::make_shared<std::string>();
  auto run_workers = std::make_shared<std::optional<unsigned>>();
  auto run_cluster_threshold = std::make_shared<double>(1.0);
  auto run_reference = std::make_shared<std::string>();
  run->add_option("--config", *run_config, "experiment config JSON")->required();
  run->add_option("--out", *run_out, "output directory");
  run->add_option("--seed", *run_seed, "override master seed");
  run->add_option("--reps", *run_reps, "override repetition count");
  run->add_option("--pca", *run_pca, "override pca mode: off | evr=<r> | k=<int>");
  run->add_option("--features", *run_features, "dcz25 | full110 | schema JSON path");
  run->add_option("--criterion", *run_criterion)
      ->check(CLI::IsMember({"", "acc", "auc"}));
  run->add_option("--workers", *run_workers, "override worker threads");
  run->add_option("--cluster-threshold", *run_cluster_threshold,
                  "dendrogram cut for the decorrelated report");
  run->add_option("--reference", *run_reference, "reference constants JSON");
  run->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_run(*run_config, *run_out, *run_seed, *run_reps, *run_pca,
                     *run_features, *run_criterion, *run_workers,
                     *run_cluster_threshold, *run_reference);
    });
  });

  // report
  auto* report = app.add_subcommand("report", "render the Markdown report from run artifacts");
  auto report_per_rep = std::make_shared<std::string>();
  auto report_config = std::make_shared<std::string>();
  auto report_reference = std::make_shared<std::string>();
  auto report_out = std::make_shared<std::string>();
  report->add_option("--per-rep", *report_per_rep, "per_rep.csv from a run")->required();
  report->add_option("--config", *report_config, "experiment config JSON")->required();
  report->add_option("--reference", *report_reference, "reference constants JSON");
  report->add_option("--out", *report_out, "report path (stdout when omitted)");
  report->callback([=, &run_guarded] {
    run_guarded([&] {
      return cmd_report(*report_per_rep, *report_config, *report_reference,
                        *report_out);
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // CLI usage problems are configuration errors
  }
  return exit_code;
}
