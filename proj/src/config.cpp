#include "rmtopo/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "rmtopo/errors.hpp"

namespace rmtopo {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const char* section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Idx: return "idx";
    case DatasetKind::FeatureCsv: return "feature_csv";
    case DatasetKind::SynthBlobs: return "synth_blobs";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "idx") return DatasetKind::Idx;
  if (s == "feature_csv") return DatasetKind::FeatureCsv;
  if (s == "synth_blobs") return DatasetKind::SynthBlobs;
  throw ConfigError("dataset.kind: unknown kind '" + s + "'");
}

// Sub-stream ids for the pieces derived from the run seed.
constexpr std::uint64_t kSplitStream = 11;
constexpr std::uint64_t kSynthStream = 12;

}  // namespace

std::string to_string(WoMode m) { return m == WoMode::Free ? "free" : "budget-matched"; }

WoMode wo_mode_from_string(const std::string& s) {
  if (s == "free") return WoMode::Free;
  if (s == "budget-matched" || s == "budget_matched" || s == "budget") return WoMode::BudgetMatched;
  throw ConfigError("unknown weight-optimization mode '" + s + "' (free | budget-matched)");
}

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  device.validate();
  energy.validate();
  if (hardware.bits < 1 || hardware.bits > 16) throw ConfigError("hardware.bits must lie in [1,16]");
  if (!(hardware.weight_gain > 0)) throw ConfigError("hardware.weight_gain must be positive");
  if (!(hardware.keep_fraction > 0 && hardware.keep_fraction <= 1))
    throw ConfigError("hardware.keep_fraction must lie in (0,1]");
  if (hardware.adc_bits < 0) throw ConfigError("hardware.adc_bits must be >= 0");
  if (!(hardware.v_read > 0)) throw ConfigError("hardware.v_read must be positive");
  const TrainOptions& t = training;
  if (t.epochs < 0) throw ConfigError("training.epochs must be >= 0");
  if (t.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (!(t.eta >= 0) || !(t.eta_wo >= 0)) throw ConfigError("learning rates must be >= 0");
  if (!(t.sparsity >= 0 && t.sparsity < 1)) throw ConfigError("training.sparsity must lie in [0,1)");
  if (!(t.alpha > 0)) throw ConfigError("training.alpha must be positive");
  if (!(t.t_w >= 0)) throw ConfigError("training.t_w must be >= 0");
  if (t.mode == WoMode::BudgetMatched && t.budget == 0)
    throw ConfigError("training.budget must be positive for budget-matched mode");
  if (dataset.train == 0) throw ConfigError("dataset.train must be positive");
  if (dataset.kind == DatasetKind::SynthBlobs &&
      (dataset.classes < 1 || dataset.per_class < 0 || !(dataset.separation > 0)))
    throw ConfigError("dataset: synth_blobs needs classes >= 1, per_class >= 0, separation > 0");
  try {
    propagate_shapes(network);
  } catch (const Error& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
}

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
  check_keys(j, "config",
             {"seed", "workers", "network", "dataset", "device", "hardware", "training", "energy"});
  RunConfig cfg;
  read(j, "seed", cfg.seed, "config");
  read(j, "workers", cfg.workers, "config");

  if (!j.contains("network")) throw ConfigError("config: missing 'network'");
  try {
    cfg.network = j.at("network").get<NetworkSpec>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  // The CRNN digitizes with 3 bits, the CNN with 4, unless overridden below.
  if (cfg.network.name == "crnn") cfg.hardware.bits = 3;

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset",
               {"kind", "images", "labels", "preprocess", "target_hw", "bits", "path", "classes",
                "per_class", "shape", "separation", "noise", "train", "val", "test"});
    DatasetConfig& ds = cfg.dataset;
    std::string kind = to_string(ds.kind);
    read(d, "kind", kind, "dataset");
    ds.kind = dataset_kind_from_string(kind);
    read(d, "images", ds.images, "dataset");
    read(d, "labels", ds.labels, "dataset");
    read(d, "preprocess", ds.preprocess, "dataset");
    read(d, "target_hw", ds.target_hw, "dataset");
    read(d, "bits", ds.levels_bits, "dataset");
    read(d, "path", ds.path, "dataset");
    read(d, "classes", ds.classes, "dataset");
    read(d, "per_class", ds.per_class, "dataset");
    read(d, "shape", ds.shape, "dataset");
    read(d, "separation", ds.separation, "dataset");
    read(d, "noise", ds.noise, "dataset");
    read(d, "train", ds.train, "dataset");
    read(d, "val", ds.val, "dataset");
    read(d, "test", ds.test, "dataset");
    ds.images = resolve(base_dir, ds.images);
    ds.labels = resolve(base_dir, ds.labels);
    ds.path = resolve(base_dir, ds.path);
  }

  if (j.contains("device")) {
    const json& d = j.at("device");
    check_keys(d, "device",
               {"pristine_conductance_us", "formed_mean_us", "formed_sigma_us", "off_mean_us",
                "off_sigma_us", "read_noise_cv", "form_probability", "write_tolerance",
                "max_write_pulses", "write_noise_cv"});
    DeviceSpec& s = cfg.device;
    read(d, "pristine_conductance_us", s.pristine_conductance_us, "device");
    read(d, "formed_mean_us", s.formed_mean_us, "device");
    read(d, "formed_sigma_us", s.formed_sigma_us, "device");
    read(d, "off_mean_us", s.off_mean_us, "device");
    read(d, "off_sigma_us", s.off_sigma_us, "device");
    read(d, "read_noise_cv", s.read_noise_cv, "device");
    read(d, "form_probability", s.form_probability, "device");
    read(d, "write_tolerance", s.write_tolerance, "device");
    read(d, "max_write_pulses", s.max_write_pulses, "device");
    read(d, "write_noise_cv", s.write_noise_cv, "device");
  }

  if (j.contains("hardware")) {
    const json& h = j.at("hardware");
    check_keys(h, "hardware",
               {"bits", "input_lo", "input_hi", "v_read", "adc_bits", "weight_gain", "keep_fraction"});
    HardwareOptions& o = cfg.hardware;
    read(h, "bits", o.bits, "hardware");
    read(h, "input_lo", o.input_lo, "hardware");
    read(h, "input_hi", o.input_hi, "hardware");
    read(h, "v_read", o.v_read, "hardware");
    read(h, "adc_bits", o.adc_bits, "hardware");
    read(h, "weight_gain", o.weight_gain, "hardware");
    read(h, "keep_fraction", o.keep_fraction, "hardware");
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, "training",
               {"epochs", "batch_size", "eta", "sparsity", "t_init", "t_end", "alpha",
                "per_step_selection", "eta_wo", "wo_mode", "t_w", "budget"});
    TrainOptions& o = cfg.training;
    read(t, "epochs", o.epochs, "training");
    read(t, "batch_size", o.batch_size, "training");
    read(t, "eta", o.eta, "training");
    read(t, "sparsity", o.sparsity, "training");
    read(t, "t_init", o.t_init, "training");
    read(t, "t_end", o.t_end, "training");
    read(t, "alpha", o.alpha, "training");
    read(t, "per_step_selection", o.per_step_selection, "training");
    read(t, "eta_wo", o.eta_wo, "training");
    std::string mode = to_string(o.mode);
    read(t, "wo_mode", mode, "training");
    o.mode = wo_mode_from_string(mode);
    read(t, "t_w", o.t_w, "training");
    read(t, "budget", o.budget, "training");
  }
  // The pruned fraction sets the expected active fan-in unless given.
  if (!(j.contains("hardware") && j.at("hardware").contains("keep_fraction")))
    cfg.hardware.keep_fraction = 1.0 - cfg.training.sparsity;

  if (j.contains("energy")) {
    const json& e = j.at("energy");
    check_keys(e, "energy",
               {"v_read", "t_read_ns", "e_reset_pj", "e_set_pj", "e_write_pulse_pj", "e_form_pj",
                "digital_overhead_pj_per_mac"});
    EnergySpec& s = cfg.energy;
    read(e, "v_read", s.v_read, "energy");
    read(e, "t_read_ns", s.t_read_ns, "energy");
    read(e, "e_reset_pj", s.e_reset_pj, "energy");
    read(e, "e_set_pj", s.e_set_pj, "energy");
    read(e, "e_write_pulse_pj", s.e_write_pulse_pj, "energy");
    read(e, "e_form_pj", s.e_form_pj, "energy");
    read(e, "digital_overhead_pj_per_mac", s.digital_overhead_pj_per_mac, "energy");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return parse_run_config(j, std::filesystem::path(path).parent_path().string());
}

json run_config_to_json(const RunConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  const DeviceSpec& s = cfg.device;
  const HardwareOptions& h = cfg.hardware;
  const TrainOptions& t = cfg.training;
  const EnergySpec& e = cfg.energy;
  json j;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["network"] = cfg.network;
  json dj = {{"kind", to_string(d.kind)}, {"train", d.train}, {"val", d.val}, {"test", d.test}};
  switch (d.kind) {
    case DatasetKind::Idx:
      dj.update({{"images", d.images}, {"labels", d.labels}, {"preprocess", d.preprocess},
                 {"target_hw", d.target_hw}, {"bits", d.levels_bits}});
      break;
    case DatasetKind::FeatureCsv:
      dj["path"] = d.path;
      break;
    case DatasetKind::SynthBlobs:
      dj.update({{"classes", d.classes}, {"per_class", d.per_class}, {"shape", d.shape},
                 {"separation", d.separation}, {"noise", d.noise}});
      break;
  }
  j["dataset"] = dj;
  j["device"] = {{"pristine_conductance_us", s.pristine_conductance_us},
                 {"formed_mean_us", s.formed_mean_us},
                 {"formed_sigma_us", s.formed_sigma_us},
                 {"off_mean_us", s.off_mean_us},
                 {"off_sigma_us", s.off_sigma_us},
                 {"read_noise_cv", s.read_noise_cv},
                 {"form_probability", s.form_probability},
                 {"write_tolerance", s.write_tolerance},
                 {"max_write_pulses", s.max_write_pulses},
                 {"write_noise_cv", s.write_noise_cv}};
  j["hardware"] = {{"bits", h.bits},         {"input_lo", h.input_lo},
                   {"input_hi", h.input_hi}, {"v_read", h.v_read},
                   {"adc_bits", h.adc_bits}, {"weight_gain", h.weight_gain},
                   {"keep_fraction", h.keep_fraction}};
  j["training"] = {{"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"eta", t.eta},
                   {"sparsity", t.sparsity},
                   {"t_init", t.t_init},
                   {"t_end", t.t_end},
                   {"alpha", t.alpha},
                   {"per_step_selection", t.per_step_selection},
                   {"eta_wo", t.eta_wo},
                   {"wo_mode", to_string(t.mode)},
                   {"t_w", t.t_w},
                   {"budget", t.budget}};
  j["energy"] = {{"v_read", e.v_read},
                 {"t_read_ns", e.t_read_ns},
                 {"e_reset_pj", e.e_reset_pj},
                 {"e_set_pj", e.e_set_pj},
                 {"e_write_pulse_pj", e.e_write_pulse_pj},
                 {"e_form_pj", e.e_form_pj},
                 {"digital_overhead_pj_per_mac", e.digital_overhead_pj_per_mac}};
  return j;
}

int effective_workers(int requested) {
  const char* strict = std::getenv("REPRO_STRICT");
  if (strict && std::string(strict) == "1") return 1;
  return std::max(requested, 1);
}

Splits load_splits(const RunConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  Dataset ds;
  switch (d.kind) {
    case DatasetKind::Idx: {
      const int classes = output_classes(cfg.network);
      ds = load_idx(d.images, d.labels, classes);
      if (d.preprocess) ds = preprocess_fashion(ds, d.target_hw, d.levels_bits);
      break;
    }
    case DatasetKind::FeatureCsv:
      ds = load_feature_csv(d.path);
      break;
    case DatasetKind::SynthBlobs:
      ds = synth_blobs(d.classes, d.per_class, d.shape, d.separation,
                       derive_seed(cfg.seed, kSynthStream), d.noise);
      break;
  }
  if (!ds.samples.empty() && ds.samples.front().shape() != cfg.network.input_shape)
    throw ConfigError("dataset sample shape " + ds.samples.front().shape_str() +
                      " does not match network input " + shape_to_string(cfg.network.input_shape));
  if (d.train + d.val + d.test > ds.size())
    throw ConfigError("dataset has " + std::to_string(ds.size()) + " samples, split asks for " +
                      std::to_string(d.train + d.val + d.test));
  return split(ds, d.train, d.val, d.test, derive_seed(cfg.seed, kSplitStream));
}

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions o = cfg.training;
  o.seed = cfg.seed;
  o.workers = effective_workers(cfg.workers);
  o.energy = cfg.energy;
  return o;
}

}  // namespace rmtopo
