#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = RMTOPO_CLI;
const fs::path kData = TEST_DATA_DIR;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rmtopo_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::string cfg(const std::string& name) { return (kData / name).string(); }

fs::path write_config(const std::string& name, const json& j) {
  fs::path p = fs::temp_directory_path() / ("rmtopo_cli_" + name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

int csv_rows(const fs::path& p) {
  std::istringstream is(slurp(p));
  std::string line;
  int n = -1;
  while (std::getline(is, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("exit codes") {
  CHECK(run("--help") == 0);
  CHECK(run("form --config " + cfg("tiny_blobs.json")) == 2);  // --out missing
  CHECK(run("form --config /nonexistent.json --out /tmp/x") == 3);
  json bad = load(kData / "tiny_blobs.json");
  bad["training"]["sparsity"] = 1.5;
  CHECK(run("form --config " + write_config("bad", bad).string() + " --out /tmp/x") == 2);
  json nodata = load(kData / "tiny_blobs.json");
  nodata["dataset"] = {{"kind", "idx"}, {"images", "/nonexistent/i"}, {"labels", "/nonexistent/l"},
                       {"train", 1}};
  CHECK(run("train-to --config " + write_config("nodata", nodata).string() + " --out " +
            scratch("nodata").string()) == 3);
  CHECK(run("eval --config " + cfg("tiny_blobs.json") + " --run /nonexistent --out /tmp/x") == 3);
  CHECK(run("export-dist --bank-dir /nonexistent --out /tmp/x") == 3);
  CHECK(run("train-wo --config " + cfg("tiny_blobs.json") + " --mode sometimes --out /tmp/x") == 2);
}

TEST_CASE("non-finite feature value is a parse error") {
  const fs::path csv = fs::temp_directory_path() / "rmtopo_cli_nan.csv";
  {
    std::ofstream os(csv);
    os << "14,14,2\n";
    for (int i = 0; i < 20; ++i) {
      os << i % 2 << (i == 5 ? ",nan" : ",0.5");
      for (int k = 1; k < 196; ++k) os << ",0.5";
      os << "\n";
    }
  }
  json j = load(kData / "tiny_blobs.json");
  j["network"]["classes"] = 2;
  j["dataset"] = {{"kind", "feature_csv"}, {"path", csv.string()}, {"train", 10}, {"val", 5}, {"test", 5}};
  CHECK(run("train-to --config " + write_config("nan", j).string() + " --out " + scratch("nan").string()) == 2);
}

TEST_CASE("form") {
  const auto a = scratch("form_a"), b = scratch("form_b");
  REQUIRE(run("form --config " + cfg("tiny_blobs.json") + " --out " + a.string()) == 0);
  REQUIRE(run("form --config " + cfg("tiny_blobs.json") + " --out " + b.string()) == 0);
  json s = load(a / "form_summary.json");
  const double pos = s["modes"]["positive"]["weight_mean"];
  const double neg = s["modes"]["negative"]["weight_mean"];
  CHECK(pos > 0);
  CHECK(neg < 0);
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().extension() == ".csv") CHECK(slurp(e.path()) == slurp(b / e.path().filename()));

  const auto c = scratch("form_seed");
  REQUIRE(run("form --config " + cfg("tiny_blobs.json") + " --seed 8 --out " + c.string()) == 0);
  CHECK(slurp(a / "L0.conv.gplus.csv") != slurp(c / "L0.conv.gplus.csv"));

  json all = load(kData / "tiny_blobs.json");
  all["device"] = {{"form_probability", 1.0}};
  const auto d = scratch("form_all");
  REQUIRE(run("form --config " + write_config("all", all).string() + " --out " + d.string()) == 0);
  json sd = load(d / "form_summary.json");
  for (const auto& slot : sd["slots"]) {
    CHECK(slot["g_plus_pristine"] == 0);
    CHECK(slot["g_minus_pristine"] == slot["rows"].get<int>() * slot["cols"].get<int>());
  }
}

TEST_CASE("training commands") {
  const auto zero = scratch("to_zero");
  REQUIRE(run("train-to --config " + cfg("tiny_blobs.json") + " --epochs 0 --out " + zero.string()) == 0);
  CHECK(csv_rows(zero / "report.csv") == 1);
  CHECK(load(zero / "summary.json")["ledger"]["programming_operations"] == 0);

  const auto to = scratch("to");
  REQUIRE(run("train-to --config " + cfg("tiny_blobs.json") + " --out " + to.string()) == 0);
  json s = load(to / "summary.json");
  CHECK(s["method"] == "TO");
  CHECK(s["ledger"]["write_pulses"] == 0);
  CHECK(s["ledger"]["writes"] == 0);
  CHECK(csv_rows(to / "report.csv") == 3);

  const auto free_dir = scratch("wo_free"), budget_dir = scratch("wo_budget");
  REQUIRE(run("train-wo --config " + cfg("tiny_blobs.json") + " --mode free --out " + free_dir.string()) == 0);
  REQUIRE(run("train-wo --config " + cfg("tiny_blobs.json") + " --mode budget-matched --budget 50 --out " +
              budget_dir.string()) == 0);
  json f = load(free_dir / "summary.json"), b = load(budget_dir / "summary.json");
  CHECK(f["wo_mode"] == "free");
  CHECK(b["wo_mode"] == "budget-matched");
  CHECK(f["t_w"] != b["t_w"]);
  CHECK(b["ledger"]["programming_operations"].get<int>() <= 50);
  CHECK(f["ledger"]["writes"].get<int>() > 0);
  CHECK(run("train-wo --config " + cfg("tiny_blobs.json") + " --mode budget-matched --out /tmp/x") == 2);

  const auto rep = scratch("report");
  REQUIRE(run("report --runs " + to.string() + " " + free_dir.string() + " --out " + rep.string()) == 0);
  json r = load(rep / "report.json");
  CHECK(r.contains("comparison"));
}

TEST_CASE("eval") {
  const auto run_dir = scratch("bin_run"), e1 = scratch("bin_e1"), e2 = scratch("bin_e2");
  REQUIRE(run("train-to --config " + cfg("binary_blobs.json") + " --out " + run_dir.string()) == 0);
  REQUIRE(run("eval --config " + cfg("binary_blobs.json") + " --run " + run_dir.string() + " --out " + e1.string()) == 0);
  REQUIRE(run("eval --config " + cfg("binary_blobs.json") + " --from " + run_dir.string() + " --out " + e2.string()) == 0);
  json m = load(e1 / "metrics.json");
  CHECK(m.contains("auc_roc"));
  CHECK(m.contains("auc_pr"));
  CHECK(fs::exists(e1 / "roc.csv"));
  CHECK(slurp(e1 / "metrics.json") == slurp(e2 / "metrics.json"));
  // separable task: the confusion matrix is diagonal
  REQUIRE(m["accuracy"] == 1.0);
  const auto conf = m["confusion"];
  for (std::size_t i = 0; i < conf.size(); ++i)
    for (std::size_t j = 0; j < conf.size(); ++j)
      if (i != j) CHECK(conf[i][j] == 0);

  const auto e3 = scratch("tiny_eval");
  const auto tiny = scratch("tiny_run");
  REQUIRE(run("train-to --config " + cfg("tiny_blobs.json") + " --epochs 1 --out " + tiny.string()) == 0);
  REQUIRE(run("eval --config " + cfg("tiny_blobs.json") + " --run " + tiny.string() + " --out " + e3.string()) == 0);
  CHECK_FALSE(load(e3 / "metrics.json").contains("auc_roc"));
}

TEST_CASE("export-dist") {
  const auto run_dir = scratch("dist_run");
  REQUIRE(run("train-to --config " + cfg("binary_blobs.json") + " --epochs 1 --out " + run_dir.string()) == 0);
  const auto d = scratch("dist");
  REQUIRE(run("export-dist --bank-dir " + run_dir.string() + " --out " + d.string()) == 0);
  json s = load(d / "dist_summary.json");
  CHECK(s["bins"] == 101);
  CHECK(s["before"]["modes"].size() == 2);
  REQUIRE(s["after"]["modes"].size() == 3);
  CHECK(std::abs(s["after"]["modes"][1]["center_us"].get<double>()) < 1.0);
  CHECK(csv_rows(d / "hist_after.csv") == 101);

  const auto two = scratch("dist_two");
  REQUIRE(run("export-dist --bank-dir " + run_dir.string() + " --bins 2 --out " + two.string()) == 0);
  CHECK(csv_rows(two / "hist_after.csv") == 2);

  // pristine bank: every pair at the pristine conductance on both sides
  json snap = load(run_dir / "snapshot.json");
  for (auto& slot : snap["slots"])
    for (const char* side : {"g_plus", "g_minus"}) {
      auto& g = slot[side];
      for (auto& v : g["g_us"]) v = 0.033;
      for (auto& st : g["state"]) st = 0;
    }
  const auto pdir = scratch("pristine_bank");
  fs::create_directories(pdir);
  std::ofstream(pdir / "snapshot.json") << snap.dump();
  const auto pd = scratch("pristine_dist");
  REQUIRE(run("export-dist --bank-dir " + pdir.string() + " --out " + pd.string()) == 0);
  json ps = load(pd / "dist_summary.json");
  REQUIRE(ps["after"]["modes"].size() == 1);
  CHECK(std::abs(ps["after"]["modes"][0]["center_us"].get<double>()) < 0.05);
}
