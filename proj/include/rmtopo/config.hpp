#pragma once

// Run configuration: everything that determines an experiment, loadable from
// a JSON file. Relative dataset paths resolve against the config file's
// directory.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rmtopo/data.hpp"
#include "rmtopo/device.hpp"
#include "rmtopo/hw_network.hpp"
#include "rmtopo/metrics.hpp"
#include "rmtopo/network.hpp"
#include "rmtopo/trainer.hpp"

namespace rmtopo {

enum class DatasetKind { Idx, FeatureCsv, SynthBlobs };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::SynthBlobs;
  // idx
  std::string images;
  std::string labels;
  bool preprocess = true;
  int target_hw = 14;
  int levels_bits = 4;
  // feature_csv
  std::string path;
  // synth_blobs
  int classes = 10;
  int per_class = 100;
  std::vector<int> shape{1, 14, 14};
  double separation = 10.0;
  double noise = 0.1;
  // split
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 1;
  NetworkSpec network;
  DatasetConfig dataset;
  DeviceSpec device;
  HardwareOptions hardware;
  TrainOptions training;
  EnergySpec energy;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Workers after applying REPRO_STRICT=1 (which forces 1).
int effective_workers(int requested);

/// Loads and splits the configured dataset. Missing files raise
/// MissingInputError.
Splits load_splits(const RunConfig& cfg);

/// Options to hand to the trainers, with seed/workers/energy filled in.
TrainOptions train_options(const RunConfig& cfg);

std::string to_string(WoMode m);
WoMode wo_mode_from_string(const std::string& s);

}  // namespace rmtopo
