#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rmtopo/analog_vmm.hpp"
#include "rmtopo/device.hpp"

namespace rmtopo {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

/// Metric value plus a flag raised when the denominator was zero (value 0).
struct Ratio {
  double value = 0.0;
  bool degenerate = false;
};

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

Ratio tpr_recall(const ConfusionCounts& c);
Ratio fpr(const ConfusionCounts& c);
Ratio precision(const ConfusionCounts& c);
Ratio f1(const ConfusionCounts& c);
Ratio accuracy(const ConfusionCounts& c);

/// Multi-class confusion matrix, rows = truth, cols = prediction.
std::vector<std::vector<std::uint64_t>> confusion_matrix(std::span<const int> pred,
                                                         std::span<const int> truth, int classes);

struct CurvePoint {
  double threshold;
  double x;
  double y;
};

struct Curves {
  std::vector<CurvePoint> roc;  // x = FPR, y = TPR
  std::vector<CurvePoint> pr;   // x = recall, y = precision
  double auc_roc = 0.0;
  double auc_pr = 0.0;
};

/// Sweep over every distinct score (descending), predicting positive when
/// score >= threshold. ROC starts at (0,0); PR starts at (0, first precision).
/// Areas by the trapezoidal rule.
Curves roc_pr_curves(std::span<const double> probabilities, std::span<const std::uint8_t> truth);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::uint64_t> counts;

  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  double center(std::size_t bin) const { return lo + (static_cast<double>(bin) + 0.5) * width(); }
};

/// Equal-width bins over [lo, hi]; the top edge belongs to the last bin and
/// values outside the range are dropped.
Histogram histogram(std::span<const double> values, int bins, double lo, double hi);

struct Mode {
  double center = 0.0;
  std::uint64_t peak_count = 0;
};

/// Peak scan: local maxima of a 3-bin moving sum that reach `min_fraction` of
/// the tallest one and are separated from their neighbours by a dip below
/// half the smaller peak.
std::vector<Mode> find_modes(const Histogram& h, double min_fraction = 0.05);

struct EnergySpec {
  double v_read = 0.1;
  double t_read_ns = 100.0;
  double e_reset_pj = 10.0;
  double e_set_pj = 10.0;
  double e_write_pulse_pj = 10.0;
  double e_form_pj = 10.0;
  /// Digital shift-and-add cost per (active row, column, bit plane) product.
  double digital_overhead_pj_per_mac = 0.02;

  void validate() const;
};

/// Per-row sum of G+ and G- over all columns (uS), from stored conductance.
std::vector<double> row_conductance_sums(const DifferentialPairBank& bank);

/// Forward-pass energy in pJ for one bit-sliced VMM given precomputed row
/// sums. Includes the all-rows offset read when bp.lo != 0.
double forward_energy_pj(std::span<const double> row_sums, int cols, const BitPlanes& bp,
                         const EnergySpec& spec);

/// Same, in uJ, straight from a bank.
double forward_energy(const DifferentialPairBank& bank, const BitPlanes& bp, const EnergySpec& spec);

struct LedgerCounts {
  std::uint64_t resets = 0;
  std::uint64_t sets = 0;
  std::uint64_t forms = 0;
  std::uint64_t writes = 0;        // closed-loop write invocations (weight updates)
  std::uint64_t write_pulses = 0;  // pulses spent by those writes

  /// Hardware weight updates: pruning/reinstating events plus weight writes.
  std::uint64_t programming_operations() const { return resets + sets + writes; }
  LedgerCounts& operator+=(const LedgerCounts& o);
};

/// Monotone per-layer programming counters.
class ProgrammingLedger {
 public:
  void add(const std::string& layer, const LedgerCounts& delta);
  const std::map<std::string, LedgerCounts>& layers() const { return layers_; }
  LedgerCounts total() const;

 private:
  std::map<std::string, LedgerCounts> layers_;
};

/// Programming energy in uJ for a set of counters.
double programming_energy(const LedgerCounts& counts, const EnergySpec& spec);
double programming_energy(const ProgrammingLedger& ledger, const EnergySpec& spec);

}  // namespace rmtopo
