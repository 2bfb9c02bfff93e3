#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rmtopo/rmtopo.h"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> epochs;
};

int exit_code(rmtopo_status s) {
  switch (s) {
    case RMTOPO_OK: return 0;
    case RMTOPO_ERR_CONFIG:
    case RMTOPO_ERR_PARSE:
      return 2;
    case RMTOPO_ERR_MISSING_INPUT: return 3;
    case RMTOPO_ERR_NUMERIC: return 4;
    default: return 1;
  }
}

int fail(rmtopo_status s) {
  std::fprintf(stderr, "rmtopo: %s\n", rmtopo_last_error());
  return exit_code(s);
}

// owns the config handle
struct Config {
  rmtopo_config* h = nullptr;
  ~Config() { rmtopo_config_free(h); }
};

rmtopo_status load(const Common& c, Config& cfg) {
  rmtopo_status s = rmtopo_config_load(c.config.c_str(), &cfg.h);
  if (s != RMTOPO_OK) return s;
  if (c.seed && (s = rmtopo_config_set_seed(cfg.h, *c.seed)) != RMTOPO_OK) return s;
  if (c.workers && (s = rmtopo_config_set_workers(cfg.h, *c.workers)) != RMTOPO_OK) return s;
  if (c.epochs && (s = rmtopo_config_set_epochs(cfg.h, *c.epochs)) != RMTOPO_OK) return s;
  return RMTOPO_OK;
}

void add_common(CLI::App* sub, Common& c, bool epochs) {
  sub->add_option("--config", c.config, "run configuration JSON")->required();
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "output directory")->required();
  if (epochs) sub->add_option("--epochs", c.epochs, "override training epochs")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resistive-memory topology optimization twin"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rmtopo_version()));

  Common c;
  std::string mode;
  std::optional<std::uint64_t> budget;
  std::string run_dir;
  std::string bank_dir;
  std::vector<std::string> runs;
  int bins = 101;

  auto* form = app.add_subcommand("form", "form the network's banks and export conductances");
  add_common(form, c, false);

  auto* train_to = app.add_subcommand("train-to", "train by edge pruning");
  add_common(train_to, c, true);

  auto* train_wo = app.add_subcommand("train-wo", "train by conductance programming");
  add_common(train_wo, c, true);
  train_wo->add_option("--mode", mode, "free or budget-matched")
      ->check(CLI::IsMember({"free", "budget-matched"}));
  train_wo->add_option("--budget", budget, "programming-operation budget for budget-matched");

  auto* eval = app.add_subcommand("eval", "evaluate a trained snapshot on the test split");
  add_common(eval, c, false);
  eval->add_option("--run,--from", run_dir, "directory holding snapshot.json")->required();

  auto* report = app.add_subcommand("report", "compare finished runs");
  report->add_option("--runs", runs, "run directories")->required();
  report->add_option("--out", c.out, "output directory")->required();

  auto* dist = app.add_subcommand("export-dist", "weight histograms before and after pruning");
  dist->add_option("--config", c.config, "run configuration JSON (unused)");
  dist->add_option("--bank-dir", bank_dir, "directory holding snapshot.json")->required();
  dist->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
  dist->add_option("--out", c.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  rmtopo_status s = RMTOPO_OK;
  if (*report) {
    std::vector<const char*> ptrs;
    for (const auto& r : runs) ptrs.push_back(r.c_str());
    s = rmtopo_run_report(ptrs.data(), ptrs.size(), c.out.c_str());
    return s == RMTOPO_OK ? 0 : fail(s);
  }
  if (*dist) {
    s = rmtopo_run_export_dist(bank_dir.c_str(), bins, c.out.c_str());
    return s == RMTOPO_OK ? 0 : fail(s);
  }

  Config cfg;
  if ((s = load(c, cfg)) != RMTOPO_OK) return fail(s);

  if (*form) {
    s = rmtopo_run_form(cfg.h, c.out.c_str());
  } else if (*train_to) {
    s = rmtopo_run_train(cfg.h, "to", c.out.c_str());
  } else if (*train_wo) {
    if (!mode.empty()) s = rmtopo_config_set_wo_mode(cfg.h, mode.c_str());
    if (s == RMTOPO_OK && budget) s = rmtopo_config_set_budget(cfg.h, *budget);
    if (s == RMTOPO_OK) s = rmtopo_run_train(cfg.h, "wo", c.out.c_str());
  } else if (*eval) {
    s = rmtopo_run_eval(cfg.h, run_dir.c_str(), c.out.c_str());
  }
  return s == RMTOPO_OK ? 0 : fail(s);
}
