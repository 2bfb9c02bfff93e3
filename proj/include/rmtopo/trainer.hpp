#pragma once

// Edge-pruning topology optimization over fixed random crossbar weights, and
// the closed-loop weight-optimization baseline it is compared against.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rmtopo/data.hpp"
#include "rmtopo/hw_network.hpp"
#include "rmtopo/metrics.hpp"

namespace rmtopo {

/// Decaying score threshold: current = t_init - t * (t_init - t_end) / alpha,
/// floored at t_end; t counts new-best validation accuracies.
struct ThresholdState {
  double t_init = 0.0;
  double t_end = 0.0;
  double alpha = 20.0;
  int t_counter = 0;
  double current = 0.0;

  static ThresholdState make(double t_init, double t_end, double alpha);
};

void decay_threshold(ThresholdState& th, bool new_best);

/// Keeps entries with |delta| >= threshold, zeroes the rest.
std::vector<double> gate_score_update(std::span<const double> delta, double threshold);

/// Scores = |beta (G+ - G-)| from stored conductance.
void init_scores(ScoredLayer& layer);

/// Mask with 0 at the round(sparsity * n) smallest scores (ties broken by
/// lowest flat index), 1 elsewhere.
std::vector<std::uint8_t> select_bottom_k(std::span<const double> scores, double sparsity);
std::vector<std::uint8_t> select_subnetwork(const ScoredLayer& layer);

/// Score step from a weight gradient: -eta * dL/dW_ij * w_ij for every edge,
/// pruned or not (w is the fixed random weight, not the masked one).
std::vector<double> score_delta(const ScoredLayer& layer, std::span<const double> weight_grad,
                                double eta);

/// Single-sample form: s_ij -= eta * dL/dI_j * w_ij * Z_i, with node_grad of
/// length cols and inputs Z of length rows.
void score_update(ScoredLayer& layer, std::span<const double> node_grad,
                  std::span<const double> inputs, double eta);

/// Apply a mask change to hardware: 1->0 resets the pair, 0->1 sets it.
/// Reinstated pairs refresh the digital weight copy from the new conductance.
LedgerCounts sync_mask_to_hardware(ScoredLayer& layer, const std::vector<std::uint8_t>& old_mask,
                                   const std::vector<std::uint8_t>& new_mask);

/// True when every mask-0 position has no Formed cell and every mask-1
/// position has exactly one.
bool mask_hardware_coherent(const ScoredLayer& layer);

enum class WoMode { Free, BudgetMatched };

struct TrainOptions {
  int epochs = 15;
  int batch_size = 8;
  std::uint64_t seed = 1;
  int workers = 1;

  // Topology optimization.
  double eta = 0.05;
  double sparsity = 0.5;
  /// Negative means derived: t_init = 0.1 * initial score std, t_end = t_init / 10.
  double t_init = -1.0;
  double t_end = -1.0;
  double alpha = 20.0;
  /// Re-select the sub-network after every step; false re-selects once per
  /// epoch.
  bool per_step_selection = true;

  // Weight optimization.
  double eta_wo = 0.01;
  WoMode mode = WoMode::Free;
  double t_w = 0.0;
  /// Programming-operation budget for BudgetMatched mode.
  std::uint64_t budget = 0;

  EnergySpec energy;

  /// Called after each epoch's hardware sync (epoch 0 = initialization).
  std::function<void(int, const HardwareNetwork&)> on_epoch;
};

struct EpochRow {
  int epoch = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double loss = 0.0;
  LedgerCounts cumulative;
  double fwd_energy_uj = 0.0;  // mean per test sample
  double threshold = 0.0;
};

struct TrainReport {
  std::string method;  // "TO", "WO-free" or "WO-budget"
  std::vector<EpochRow> rows;
  ProgrammingLedger ledger;
  double t_w = 0.0;
  double final_test_acc() const { return rows.empty() ? 0.0 : rows.back().test_acc; }
};

struct Evaluation {
  double accuracy = 0.0;
  double mean_energy_uj = 0.0;
  std::vector<int> predictions;
  std::vector<std::vector<double>> probabilities;
};

/// Analog inference over a dataset with per-sample read noise derived from
/// `noise_seed`; deterministic for any worker count.
Evaluation evaluate(const HardwareNetwork& net, const Dataset& ds, std::uint64_t noise_seed,
                    const EnergySpec* energy = nullptr, int workers = 1);

/// Mean forward energy (uJ per sample) of each network's banks when driven
/// with exactly the bit planes `driver` issues on `ds`. All networks must
/// share the driver's bank layout.
std::vector<double> replay_energy(const HardwareNetwork& driver,
                                  const std::vector<const HardwareNetwork*>& nets, const Dataset& ds,
                                  std::uint64_t noise_seed, const EnergySpec& energy, int workers = 1);

TrainReport train_topology(HardwareNetwork& net, const Dataset& train, const Dataset& val,
                           const Dataset& test, const TrainOptions& opt);

TrainReport train_weights_baseline(HardwareNetwork& net, const Dataset& train, const Dataset& val,
                                   const Dataset& test, const TrainOptions& opt);

/// Runs fn(i) for i in [0, n) over `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace rmtopo
