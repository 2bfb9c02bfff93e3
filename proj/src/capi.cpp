#include "rmtopo/rmtopo.h"

#include <cstring>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "rmtopo/analog_vmm.hpp"
#include "rmtopo/config.hpp"
#include "rmtopo/device.hpp"
#include "rmtopo/errors.hpp"
#include "rmtopo/experiment.hpp"

struct rmtopo_config {
  rmtopo::RunConfig cfg;
};

struct rmtopo_bank {
  rmtopo::DifferentialPairBank bank;
};

namespace {

thread_local std::string g_last_error;

rmtopo_status status_of(rmtopo::ErrorCode c) {
  switch (c) {
    case rmtopo::ErrorCode::kConfig: return RMTOPO_ERR_CONFIG;
    case rmtopo::ErrorCode::kMissingInput: return RMTOPO_ERR_MISSING_INPUT;
    case rmtopo::ErrorCode::kNumeric: return RMTOPO_ERR_NUMERIC;
    case rmtopo::ErrorCode::kArgument: return RMTOPO_ERR_ARGUMENT;
    case rmtopo::ErrorCode::kParse: return RMTOPO_ERR_PARSE;
    case rmtopo::ErrorCode::kState: return RMTOPO_ERR_STATE;
    case rmtopo::ErrorCode::kDimension: return RMTOPO_ERR_DIMENSION;
    case rmtopo::ErrorCode::kIo: return RMTOPO_ERR_IO;
  }
  return RMTOPO_ERR_GENERIC;
}

template <typename F>
rmtopo_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return RMTOPO_OK;
  } catch (const rmtopo::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return RMTOPO_ERR_GENERIC;
}

void require(const void* p, const char* what) {
  if (!p) throw rmtopo::ArgumentError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* rmtopo_version(void) { return "0.1.0"; }

const char* rmtopo_last_error(void) { return g_last_error.c_str(); }

void rmtopo_string_free(char* s) { delete[] s; }

rmtopo_status rmtopo_config_load(const char* path, rmtopo_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new rmtopo_config{rmtopo::load_run_config(path)};
  });
}

rmtopo_status rmtopo_config_parse(const char* json_text, const char* base_dir, rmtopo_config** out) {
  return guard([&] {
    require(json_text, "json_text");
    require(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw rmtopo::ConfigError(std::string("config: ") + e.what());
    }
    *out = new rmtopo_config{rmtopo::parse_run_config(j, base_dir ? base_dir : "")};
  });
}

void rmtopo_config_free(rmtopo_config* cfg) { delete cfg; }

rmtopo_status rmtopo_config_set_seed(rmtopo_config* cfg, uint64_t seed) {
  return guard([&] {
    require(cfg, "cfg");
    cfg->cfg.seed = seed;
  });
}

rmtopo_status rmtopo_config_set_workers(rmtopo_config* cfg, int workers) {
  return guard([&] {
    require(cfg, "cfg");
    if (workers < 1) throw rmtopo::ConfigError("workers must be >= 1");
    cfg->cfg.workers = workers;
  });
}

rmtopo_status rmtopo_config_set_epochs(rmtopo_config* cfg, int epochs) {
  return guard([&] {
    require(cfg, "cfg");
    if (epochs < 0) throw rmtopo::ConfigError("epochs must be >= 0");
    cfg->cfg.training.epochs = epochs;
  });
}

rmtopo_status rmtopo_config_set_wo_mode(rmtopo_config* cfg, const char* mode) {
  return guard([&] {
    require(cfg, "cfg");
    require(mode, "mode");
    cfg->cfg.training.mode = rmtopo::wo_mode_from_string(mode);
  });
}

rmtopo_status rmtopo_config_set_budget(rmtopo_config* cfg, uint64_t budget) {
  return guard([&] {
    require(cfg, "cfg");
    cfg->cfg.training.budget = budget;
  });
}

rmtopo_status rmtopo_config_to_json(const rmtopo_config* cfg, char** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup_string(rmtopo::run_config_to_json(cfg->cfg).dump(2));
  });
}

rmtopo_status rmtopo_run_form(const rmtopo_config* cfg, const char* out_dir) {
  return guard([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    cfg->cfg.validate();
    rmtopo::run_form(cfg->cfg, out_dir);
  });
}

rmtopo_status rmtopo_run_train(const rmtopo_config* cfg, const char* method, const char* out_dir) {
  return guard([&] {
    require(cfg, "cfg");
    require(method, "method");
    require(out_dir, "out_dir");
    const std::string m = method;
    if (m != "to" && m != "wo") throw rmtopo::ArgumentError("method must be \"to\" or \"wo\"");
    cfg->cfg.validate();
    rmtopo::run_train(cfg->cfg, m == "to" ? rmtopo::Method::Topology : rmtopo::Method::Weights, out_dir);
  });
}

rmtopo_status rmtopo_run_eval(const rmtopo_config* cfg, const char* snapshot_dir, const char* out_dir) {
  return guard([&] {
    require(cfg, "cfg");
    require(snapshot_dir, "snapshot_dir");
    require(out_dir, "out_dir");
    rmtopo::run_eval(cfg->cfg, snapshot_dir, out_dir);
  });
}

rmtopo_status rmtopo_run_report(const char* const* run_dirs, size_t n_runs, const char* out_dir) {
  return guard([&] {
    require(out_dir, "out_dir");
    if (n_runs > 0) require(run_dirs, "run_dirs");
    std::vector<std::string> dirs;
    for (size_t i = 0; i < n_runs; ++i) {
      require(run_dirs[i], "run_dirs[i]");
      dirs.emplace_back(run_dirs[i]);
    }
    rmtopo::run_report(dirs, out_dir);
  });
}

rmtopo_status rmtopo_run_export_dist(const char* bank_dir, int bins, const char* out_dir) {
  return guard([&] {
    require(bank_dir, "bank_dir");
    require(out_dir, "out_dir");
    rmtopo::run_export_dist(bank_dir, bins, out_dir);
  });
}

rmtopo_status rmtopo_bank_create(int rows, int cols, uint64_t seed, double beta, rmtopo_bank** out) {
  return guard([&] {
    require(out, "out");
    if (rows < 1 || cols < 1) throw rmtopo::ArgumentError("bank shape must be positive");
    if (!(beta > 0)) throw rmtopo::ArgumentError("beta must be positive");
    *out = new rmtopo_bank{rmtopo::DifferentialPairBank(rows, cols, rmtopo::DeviceSpec{}, seed, beta)};
  });
}

void rmtopo_bank_free(rmtopo_bank* bank) { delete bank; }

rmtopo_status rmtopo_bank_form(rmtopo_bank* bank) {
  return guard([&] {
    require(bank, "bank");
    if (!bank->bank.g_plus.all_pristine()) throw rmtopo::StateError("bank is already formed");
    bank->bank.g_plus.electroform();
    rmtopo::form_complementary(bank->bank);
  });
}

rmtopo_status rmtopo_bank_reset_pair(rmtopo_bank* bank, int row, int col) {
  return guard([&] {
    require(bank, "bank");
    rmtopo::reset_pair(bank->bank, row, col);
  });
}

rmtopo_status rmtopo_bank_set_pair(rmtopo_bank* bank, int row, int col) {
  return guard([&] {
    require(bank, "bank");
    rmtopo::set_pair(bank->bank, row, col);
  });
}

rmtopo_status rmtopo_bank_weight(const rmtopo_bank* bank, int row, int col, double* out) {
  return guard([&] {
    require(bank, "bank");
    require(out, "out");
    const auto& b = bank->bank;
    if (!b.g_plus.in_range(row, col)) throw rmtopo::ArgumentError("pair index out of range");
    *out = b.beta * (b.g_plus.conductance(row, col) - b.g_minus.conductance(row, col));
  });
}

rmtopo_status rmtopo_bank_vmm(const rmtopo_bank* bank, const double* x, int bits, double lo,
                              double hi, uint64_t noise_seed, int noisy, double* y) {
  return guard([&] {
    require(bank, "bank");
    require(x, "x");
    require(y, "y");
    const auto& b = bank->bank;
    rmtopo::QuantizationSpec q;
    q.bits = bits;
    q.lo = lo;
    q.hi = hi;
    q.validate();
    const std::span<const double> xs(x, static_cast<std::size_t>(b.rows()));
    std::vector<double> out;
    if (noisy) {
      rmtopo::Rng rng(rmtopo::mix_seed(noise_seed));
      out = rmtopo::vmm_bit_sliced(b, xs, q, rng);
    } else {
      out = rmtopo::vmm_planes(rmtopo::stored_bank(b), rmtopo::quantize_input(xs, q), q.v_read);
    }
    std::memcpy(y, out.data(), out.size() * sizeof(double));
  });
}

}  // extern "C"
