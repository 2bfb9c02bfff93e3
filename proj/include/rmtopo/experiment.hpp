#pragma once

// Experiment commands: each reads a RunConfig, runs one step of the pipeline
// and writes CSV/JSON outputs into a directory. Outputs carry no timestamps,
// so equal configs give byte-identical files.

#include <string>
#include <vector>

#include "json.hpp"
#include "rmtopo/config.hpp"
#include "rmtopo/hw_network.hpp"

namespace rmtopo {

enum class Method { Topology, Weights };

/// Seed of the network's banks for a run seed.
std::uint64_t network_seed(std::uint64_t run_seed);

/// Unformed network for the config. Weight optimization keeps every edge, so
/// `dense` sets keep_fraction to 1.
HardwareNetwork make_network(const RunConfig& cfg, bool dense);

nlohmann::json snapshot_to_json(const HardwareNetwork& net, const std::string& method);
/// Rebuilds a formed network from a snapshot written by snapshot_to_json.
HardwareNetwork network_from_snapshot(const nlohmann::json& snap, const DeviceSpec& device);
nlohmann::json read_json_file(const std::string& path);

/// Per-pair weight modes by cell state: positive (G+ formed), negative (G-
/// formed) and zero (neither formed, i.e. pruned or pristine).
nlohmann::json weight_mode_summary(const HardwareNetwork& net);

void run_form(const RunConfig& cfg, const std::string& out_dir);
void run_train(const RunConfig& cfg, Method method, const std::string& out_dir);
void run_eval(const RunConfig& cfg, const std::string& snapshot_dir, const std::string& out_dir);
void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);
void run_export_dist(const std::string& bank_dir, int bins, const std::string& out_dir);

/// CSV with columns epoch,train_acc,val_acc,test_acc,loss,resets,sets,writes,
/// write_pulses,fwd_energy_uJ,threshold.
void write_report_csv(const std::string& path, const TrainReport& report);

}  // namespace rmtopo
