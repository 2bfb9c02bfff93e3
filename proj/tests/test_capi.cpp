#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rmtopo/rmtopo.h"

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "seed": 4,
  "network": {"name": "cnn", "scale": 0.0625, "classes": 3},
  "dataset": {"kind": "synth_blobs", "classes": 3, "per_class": 10, "shape": [1, 14, 14],
              "train": 12, "val": 6, "test": 6},
  "hardware": {"input_lo": 0.0, "input_hi": 0.0},
  "training": {"epochs": 1, "eta": 0.004, "t_init": 0.0, "t_end": 0.0}
})";

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rmtopo_capi_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::strlen(rmtopo_version()) > 0);
  rmtopo_config* cfg = nullptr;
  CHECK(rmtopo_config_load("/nonexistent/cfg.json", &cfg) == RMTOPO_ERR_MISSING_INPUT);
  CHECK(cfg == nullptr);
  CHECK(std::string(rmtopo_last_error()).find("cfg.json") != std::string::npos);
  CHECK(rmtopo_config_parse("{\"seed\": ", nullptr, &cfg) == RMTOPO_ERR_CONFIG);
  CHECK(rmtopo_config_parse("{\"seed\": 1, \"x\": 2}", nullptr, &cfg) == RMTOPO_ERR_CONFIG);
  CHECK(rmtopo_config_parse(nullptr, nullptr, &cfg) == RMTOPO_ERR_ARGUMENT);
  REQUIRE(rmtopo_config_parse(kTiny, nullptr, &cfg) == RMTOPO_OK);
  CHECK(std::string(rmtopo_last_error()).empty());
  CHECK(rmtopo_config_set_workers(cfg, 0) == RMTOPO_ERR_CONFIG);
  CHECK(rmtopo_config_set_wo_mode(cfg, "maybe") == RMTOPO_ERR_CONFIG);
  CHECK(rmtopo_run_train(cfg, "xx", "/tmp") == RMTOPO_ERR_ARGUMENT);
  rmtopo_config_free(cfg);
  rmtopo_config_free(nullptr);
}

TEST_CASE("config overrides show up in the canonical json") {
  rmtopo_config* cfg = nullptr;
  REQUIRE(rmtopo_config_parse(kTiny, nullptr, &cfg) == RMTOPO_OK);
  REQUIRE(rmtopo_config_set_seed(cfg, 99) == RMTOPO_OK);
  REQUIRE(rmtopo_config_set_epochs(cfg, 7) == RMTOPO_OK);
  REQUIRE(rmtopo_config_set_wo_mode(cfg, "budget-matched") == RMTOPO_OK);
  REQUIRE(rmtopo_config_set_budget(cfg, 123) == RMTOPO_OK);
  char* text = nullptr;
  REQUIRE(rmtopo_config_to_json(cfg, &text) == RMTOPO_OK);
  const std::string s = text;
  rmtopo_string_free(text);
  CHECK(s.find("\"seed\": 99") != std::string::npos);
  CHECK(s.find("\"epochs\": 7") != std::string::npos);
  CHECK(s.find("\"budget\": 123") != std::string::npos);
  CHECK(s.find("budget-matched") != std::string::npos);

  rmtopo_config* again = nullptr;
  REQUIRE(rmtopo_config_parse(s.c_str(), nullptr, &again) == RMTOPO_OK);
  char* text2 = nullptr;
  REQUIRE(rmtopo_config_to_json(again, &text2) == RMTOPO_OK);
  CHECK(s == text2);
  rmtopo_string_free(text2);
  rmtopo_config_free(again);
  rmtopo_config_free(cfg);
}

TEST_CASE("bank handle") {
  rmtopo_bank* b = nullptr;
  CHECK(rmtopo_bank_create(0, 3, 1, 1.0, &b) == RMTOPO_ERR_ARGUMENT);
  REQUIRE(rmtopo_bank_create(4, 3, 11, 1.0 / 27.2, &b) == RMTOPO_OK);
  REQUIRE(rmtopo_bank_form(b) == RMTOPO_OK);
  CHECK(rmtopo_bank_form(b) == RMTOPO_ERR_STATE);

  double w[12];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) {
      REQUIRE(rmtopo_bank_weight(b, r, c, &w[r * 3 + c]) == RMTOPO_OK);
      CHECK(std::abs(w[r * 3 + c]) > 0.1);
    }
  CHECK(rmtopo_bank_weight(b, 4, 0, &w[0]) == RMTOPO_ERR_ARGUMENT);

  // noiseless product against the stored weights at dequantized inputs
  const double x[] = {0.0, 0.25, 0.5, 0.9375};
  double y[3];
  REQUIRE(rmtopo_bank_vmm(b, x, 4, 0.0, 1.0, 1, 0, y) == RMTOPO_OK);
  for (int c = 0; c < 3; ++c) {
    double ref = 0;
    for (int r = 0; r < 4; ++r) ref += w[r * 3 + c] * x[r];
    CHECK(y[c] == doctest::Approx(ref).epsilon(1e-9));
  }
  double y1[3], y2[3];
  REQUIRE(rmtopo_bank_vmm(b, x, 4, 0.0, 1.0, 5, 1, y1) == RMTOPO_OK);
  REQUIRE(rmtopo_bank_vmm(b, x, 4, 0.0, 1.0, 5, 1, y2) == RMTOPO_OK);
  for (int c = 0; c < 3; ++c) CHECK(y1[c] == y2[c]);
  CHECK(rmtopo_bank_vmm(b, x, 0, 0.0, 1.0, 5, 0, y) == RMTOPO_ERR_ARGUMENT);

  REQUIRE(rmtopo_bank_reset_pair(b, 0, 0) == RMTOPO_OK);
  double pruned = 0;
  REQUIRE(rmtopo_bank_weight(b, 0, 0, &pruned) == RMTOPO_OK);
  CHECK(std::abs(pruned) <= 0.2 / 27.2);
  REQUIRE(rmtopo_bank_set_pair(b, 0, 0) == RMTOPO_OK);
  REQUIRE(rmtopo_bank_weight(b, 0, 0, &pruned) == RMTOPO_OK);
  CHECK(std::abs(pruned) > 0.1);
  CHECK(rmtopo_bank_reset_pair(b, 9, 9) == RMTOPO_ERR_DIMENSION);
  rmtopo_bank_free(b);
}

TEST_CASE("commands through the C interface") {
  rmtopo_config* cfg = nullptr;
  REQUIRE(rmtopo_config_parse(kTiny, nullptr, &cfg) == RMTOPO_OK);
  const fs::path form = scratch("form"), to = scratch("to"), wo = scratch("wo"),
                 ev = scratch("eval"), rep = scratch("report"), dist = scratch("dist");
  REQUIRE(rmtopo_run_form(cfg, form.c_str()) == RMTOPO_OK);
  CHECK(fs::exists(form / "form_summary.json"));
  CHECK(fs::exists(form / "snapshot.json"));

  REQUIRE(rmtopo_run_train(cfg, "to", to.c_str()) == RMTOPO_OK);
  REQUIRE(rmtopo_run_train(cfg, "wo", wo.c_str()) == RMTOPO_OK);
  for (const char* f : {"report.csv", "summary.json", "snapshot.json", "snapshot_initial.json", "ledger.csv"}) {
    CHECK(fs::exists(to / f));
    CHECK(fs::exists(wo / f));
  }
  REQUIRE(rmtopo_run_eval(cfg, to.c_str(), ev.c_str()) == RMTOPO_OK);
  CHECK(fs::exists(ev / "metrics.json"));
  CHECK(fs::exists(ev / "confusion.csv"));
  CHECK(rmtopo_run_eval(cfg, "/nonexistent/run", ev.c_str()) == RMTOPO_ERR_MISSING_INPUT);

  const char* runs[] = {to.c_str(), wo.c_str()};
  REQUIRE(rmtopo_run_report(runs, 2, rep.c_str()) == RMTOPO_OK);
  CHECK(slurp(rep / "report.csv").find("TO") != std::string::npos);
  REQUIRE(rmtopo_run_export_dist(to.c_str(), 2, dist.c_str()) == RMTOPO_OK);
  CHECK(fs::exists(dist / "hist_before.csv"));
  CHECK(fs::exists(dist / "hist_after.csv"));
  CHECK(rmtopo_run_export_dist(to.c_str(), 0, dist.c_str()) == RMTOPO_ERR_CONFIG);
  rmtopo_config_free(cfg);
}
