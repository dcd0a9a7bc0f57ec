#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "insider/io_util.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string stdout_text;
  std::string stderr_text;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "insider_cli_test";
  fs::create_directories(dir);
  const fs::path out = dir / ("stdout_" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;

  const std::string cmd = std::string("INSIDER_DATA_DIR='") + INSIDER_DATA_DIR +
                          "' '" + INSIDER_CLI_PATH + "' " + args + " > '" +
                          out.string() + "' 2> '" + err.string() + "'";
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WEXITSTATUS(rc);
  std::ifstream so(out), se(err);
  r.stdout_text.assign(std::istreambuf_iterator<char>(so), {});
  r.stderr_text.assign(std::istreambuf_iterator<char>(se), {});
  return r;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "insider_cli_scratch";
  fs::create_directories(dir);
  return dir;
}

const char* kSmallConfig = R"({
  "dataset": {"synthetic": {"m": 6, "informative": 2, "separation": 2.0}},
  "n_transactions": 120,
  "pca": "off",
  "search": {"ntrees": [10, 25], "max_depth": [2, 5], "iterations": 2, "folds": 3},
  "reps": 2,
  "seed": 7,
  "workers": 2
})";

}  // namespace

TEST_CASE("cli synth/train/evaluate round trip exits cleanly") {
  const auto dir = scratch_dir();
  const auto feat = (dir / "feat.csv").string();
  const auto model = (dir / "model.json").string();

  auto r = run_cli("synth --n 120 --m 6 --informative 2 --separation 2.5 --seed 3 --out '" + feat + "'");
  CHECK(r.exit_code == 0);

  r = run_cli("train --data '" + feat + "' --ntrees 30 --seed 5 --model-out '" + model + "'");
  CHECK(r.exit_code == 0);

  r = run_cli("evaluate --model '" + model + "' --data '" + feat + "'");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("\"acc\"") != std::string::npos);
}

TEST_CASE("cli missing config file reports ConfigError with exit 2") {
  const auto r = run_cli("run --config /nonexistent/exp.json");
  CHECK(r.exit_code == 2);
  CHECK(r.stderr_text.rfind("ConfigError:", 0) == 0);
  // single machine-parseable line
  CHECK(std::count(r.stderr_text.begin(), r.stderr_text.end(), '\n') == 1);
}

TEST_CASE("cli malformed data exits with the data code") {
  const auto dir = scratch_dir();
  const auto bad = (dir / "bad.xml").string();
  insider::write_file_atomic(bad, "<open><unclosed>");
  const auto out = (dir / "txns.csv").string();
  const auto r = run_cli("ingest --input '" + bad + "' --out '" + out + "'");
  CHECK(r.exit_code == 0);  // batch ingest skips bad files
  CHECK(r.stderr_text.find("MalformedXml") != std::string::npos);
  CHECK(r.stdout_text.find("1 skipped") != std::string::npos);
}

TEST_CASE("cli run produces every artifact and is byte-stable across reruns") {
  const auto dir = scratch_dir();
  const auto cfg = (dir / "exp.json").string();
  insider::write_file_atomic(cfg, kSmallConfig);

  const auto out1 = (dir / "run_a").string();
  const auto out2 = (dir / "run_b").string();
  auto r = run_cli("run --config '" + cfg + "' --reps 1 --seed 7 --out '" + out1 + "'");
  CHECK(r.exit_code == 0);
  r = run_cli("run --config '" + cfg + "' --reps 1 --seed 7 --out '" + out2 + "'");
  CHECK(r.exit_code == 0);

  for (const char* name :
       {"per_rep.csv", "aggregate.json", "report.md", "importance_mdi.csv",
        "importance_permutation_test.csv", "importance_decorrelated_test.csv",
        "dendrogram.json"}) {
    CAPTURE(name);
    const auto a = fs::path(out1) / name;
    const auto b = fs::path(out2) / name;
    REQUIRE(fs::exists(a));
    REQUIRE(fs::exists(b));
    CHECK(insider::read_file(a.string()) == insider::read_file(b.string()));
  }

  const std::string report = insider::read_file((fs::path(out1) / "report.md").string());
  CHECK(report.find("Achieved metrics") != std::string::npos);
  CHECK(report.find("77.88") != std::string::npos);  // reference constants present
}

TEST_CASE("cli run accepts a csv source with a feature subset") {
  const auto dir = scratch_dir();
  const auto feat = (dir / "pool.csv").string();
  auto r = run_cli("synth --n 600 --m 6 --informative 3 --separation 2.0 --seed 3 --out '" + feat + "'");
  REQUIRE(r.exit_code == 0);

  const auto schema = (dir / "subset.json").string();
  insider::write_file_atomic(schema, R"({"name":"subset","features":[
    {"name":"signal_0","kind":"numeric","group":"Signal"},
    {"name":"signal_1","kind":"numeric","group":"Signal"},
    {"name":"noise_0","kind":"numeric","group":"Noise"}]})");

  const auto cfg = (dir / "csv_exp.json").string();
  insider::write_file_atomic(cfg, std::string(R"({
    "dataset": {"csv": ")") + feat + R"("},
    "n_transactions": 200,
    "search": {"ntrees": [10, 20], "max_depth": [2, 4], "iterations": 1, "folds": 3},
    "reps": 1,
    "seed": 11,
    "workers": 2
  })");
  const auto out = (dir / "csv_run").string();
  r = run_cli("run --config '" + cfg + "' --features '" + schema + "' --out '" + out + "'");
  CHECK(r.exit_code == 0);
  const std::string csv = insider::read_file((fs::path(out) / "per_rep.csv").string());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one rep

  // asking for a column the csv does not have is a config error
  insider::write_file_atomic(schema, R"({"name":"subset","features":[
    {"name":"not_a_column","kind":"numeric","group":"X"}]})");
  r = run_cli("run --config '" + cfg + "' --features '" + schema + "' --out '" + out + "'");
  CHECK(r.exit_code == 2);
  CHECK(r.stderr_text.rfind("ConfigError:", 0) == 0);
}

TEST_CASE("cli end-to-end: ingest, label, featurize, train, evaluate") {
  const auto dir = scratch_dir();
  const std::string fixtures = INSIDER_FIXTURES_DIR;
  const auto txns = (dir / "e2e_txns.csv").string();
  const auto labeled = (dir / "e2e_labeled.csv").string();
  const auto feat = (dir / "e2e_feat.csv").string();
  const auto model = (dir / "e2e_model.json").string();
  const auto metrics = (dir / "e2e_metrics.json").string();

  auto r = run_cli("ingest --input '" + fixtures + "/form4_01_minimal.xml' --input '" +
                   fixtures + "/form4_02_multi.xml' --input '" + fixtures +
                   "/form4_04_flags.xml' --input '" + fixtures +
                   "/form4_05_nested.xml' --out '" + txns + "'");
  REQUIRE(r.exit_code == 0);
  r = run_cli("label --transactions '" + txns + "' --defendants '" + fixtures +
              "/defendants.txt' --out '" + labeled + "'");
  REQUIRE(r.exit_code == 0);
  r = run_cli("featurize --transactions '" + labeled + "' --out '" + feat + "'");
  REQUIRE(r.exit_code == 0);
  r = run_cli("train --data '" + feat + "' --ntrees 5 --seed 2 --model-out '" +
              model + "'");
  REQUIRE(r.exit_code == 0);
  r = run_cli("evaluate --model '" + model + "' --data '" + feat + "' --out '" +
              metrics + "'");
  CHECK(r.exit_code == 0);
  const std::string text = insider::read_file(metrics);
  CHECK(text.find("\"confusion\"") != std::string::npos);
}

TEST_CASE("cli label pipeline from fixtures") {
  const auto dir = scratch_dir();
  const auto txns = (dir / "ingested.csv").string();
  const std::string fixtures = INSIDER_FIXTURES_DIR;

  auto r = run_cli("ingest --input '" + fixtures + "/form4_01_minimal.xml' --input '" +
                   fixtures + "/form4_02_multi.xml' --out '" + txns + "'");
  CHECK(r.exit_code == 0);

  const auto labeled = (dir / "labeled.csv").string();
  r = run_cli("label --transactions '" + txns + "' --defendants '" + fixtures +
              "/defendants.txt' --threshold 85 --out '" + labeled + "'");
  CHECK(r.exit_code == 0);
  const std::string text = insider::read_file(labeled);
  CHECK(text.find("DOE JOHN") != std::string::npos);
  CHECK(text.find(",unlawful") != std::string::npos);  // DOE JOHN matches
  CHECK(text.find(",lawful") != std::string::npos);    // SMITH does not
}
