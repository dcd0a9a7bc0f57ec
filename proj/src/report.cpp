#include "insider/report.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "insider/errors.hpp"

namespace insider {

using nlohmann::json;

namespace {

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string pct_or_na(const json& v) {
  if (v.is_null()) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v.get<double>());
  return buf;
}

void render_reference_table(std::string& out, const json& block) {
  out += "*" + block.at("source").get<std::string>() + "*\n\n";
  const auto& columns = block.at("columns");
  out += "| Metric |";
  for (const auto& c : columns) out += " " + c.get<std::string>() + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& [name, values] : block.at("metrics").items()) {
    out += "| " + name + " |";
    for (const auto& v : values) out += " " + pct_or_na(v) + " |";
    out += "\n";
  }
  out += "\n";
}

}  // namespace

std::string render_markdown_report(const ExperimentResult& result,
                                   const ExperimentConfig& config,
                                   const std::string& reference_json_text) {
  json ref;
  try {
    ref = json::parse(reference_json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("reference constants JSON parse error: ") + e.what());
  }

  std::string out = "# Insider-forest run report\n\n";
  out += "## Configuration\n\n";
  out += "- dataset: ";
  if (config.csv_path) {
    out += "csv `" + *config.csv_path + "`";
  } else {
    const auto& s = *config.synthetic;
    out += "synthetic (m=" + std::to_string(s.m) +
           ", informative=" + std::to_string(s.n_informative) +
           ", separation=" + fixed2(s.class_separation) + ")";
  }
  out += "\n";
  out += "- transactions: " + std::to_string(config.n_transactions) + "\n";
  out += "- pca: " + config.pca.to_string() + "\n";
  out += "- repetitions: " + std::to_string(config.reps) +
         " (failed: " + std::to_string(result.failures) + ")\n";
  out += "- seed: " + std::to_string(config.master_seed) + "\n";
  out += "- tuning: " + std::to_string(config.space.n_iterations) + " draws x " +
         std::to_string(config.space.k_folds) + "-fold CV, criterion " +
         (config.criterion == Criterion::Accuracy ? "accuracy" : "auc") + "\n\n";

  out += "## Achieved metrics (mean +/- std over repetitions, percent)\n\n";
  out += "Lawful is the positive class; the unlawful-centric reading of each\n"
         "rate is the complementary column (TNR detects unlawful, FPR is the\n"
         "unlawful share cleared as lawful).\n\n";
  out += "| Metric | Mean | Std |\n|---|---|---|\n";
  const char* names[] = {"acc", "tpr", "fpr", "tnr", "fnr", "pre", "auc", "aucpr", "oob"};
  const char* labels[] = {"ACC", "TPR", "FPR", "TNR", "FNR", "PRE", "AUC", "AUCPR", "OOB error"};
  for (std::size_t i = 0; i < 9; ++i) {
    const auto values = result.metric_values(names[i]);
    if (values.empty()) continue;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    out += std::string("| ") + labels[i] + " | " + pct(mean) + " | " +
           pct(std::sqrt(var)) + " |\n";
  }
  out += "\n";

  out += "## Reference columns\n\n";
  render_reference_table(out, ref.at("benchmarks"));
  render_reference_table(out, ref.at("reference_study"));
  if (ref.at("reference_study").contains("notes"))
    out += "> " + ref.at("reference_study").at("notes").get<std::string>() + "\n";
  return out;
}

}  // namespace insider
