#pragma once

// A NetworkSpec instantiated on differential-pair crossbars.
//
// Every weight matrix (conv kernel, FC matrix, recurrent input/hidden
// matrix) lives in its own bank in crossbar orientation: rows = fan-in,
// columns = fan-out. Conv kernels k[o][c][u][v] map to row (c*kh + u)*kw + v,
// column o. FC and recurrent matrices W[out][in] map to row in, column out.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmtopo/analog_vmm.hpp"
#include "rmtopo/device.hpp"
#include "rmtopo/metrics.hpp"
#include "rmtopo/network.hpp"
#include "rmtopo/random.hpp"
#include "rmtopo/tensor.hpp"

namespace rmtopo {

/// One weight matrix: its bank, the digital copy of the fixed random weights,
/// per-edge scores and the current sub-network mask (1 = edge kept).
struct ScoredLayer {
  std::string name;
  int layer_index = 0;
  DifferentialPairBank bank;
  std::vector<double> weights;
  std::vector<double> scores;
  std::vector<std::uint8_t> mask;
  double sparsity = 0.0;

  int rows() const { return bank.rows(); }
  int cols() const { return bank.cols(); }
  std::size_t size() const { return bank.size(); }
  std::size_t pruned_count() const;
};

struct HardwareOptions {
  /// Input digitization bits (4 for the CNN, 3 for the CRNN).
  int bits = 4;
  /// Fixed range of the first weighted layer's input; later layers scale to
  /// each sample's activation range, recurrent hidden inputs use [-1,1).
  double input_lo = 0.0;
  double input_hi = 1.0;
  double v_read = 0.1;
  int adc_bits = 0;
  /// Logical weight scale: beta = gain / (formed_mean * sqrt(fan_in * keep)).
  double weight_gain = 1.4142135623730951;
  /// Fraction of weights expected to stay active (1 - sparsity).
  double keep_fraction = 0.5;
};

enum class ForwardMode {
  Analog,   // noisy read + bit-sliced VMM with digitized inputs
  Digital,  // exact floating point with supplied or stored weights
};

/// One bit-sliced VMM issued during an analog pass.
struct Drive {
  int slot = 0;
  BitPlanes planes;
};

/// Everything the backward pass needs from one forward pass.
struct ForwardTrace {
  /// Set before the pass to collect every VMM's input bit planes in `drives`.
  bool keep_drives = false;
  std::vector<Drive> drives;
  std::vector<Tensor> inputs;  // input to each layer
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<std::vector<Tensor>> rnn_xs;
  std::vector<std::vector<Tensor>> rnn_hs;
  Tensor logits;
  double energy_pj = 0.0;
};

/// Loss gradient w.r.t. each slot's effective weight matrix (crossbar layout).
using SlotGrads = std::vector<std::vector<double>>;

class HardwareNetwork {
 public:
  HardwareNetwork(NetworkSpec spec, const DeviceSpec& device, std::uint64_t seed,
                  const HardwareOptions& options);

  const NetworkSpec& spec() const { return spec_; }
  const HardwareOptions& options() const { return options_; }
  int classes() const;

  std::vector<ScoredLayer>& slots() { return slots_; }
  const std::vector<ScoredLayer>& slots() const { return slots_; }

  /// Electroform G+ and complementary-form G- for every slot, then record the
  /// digital weight copy. Returns the number of formed cells.
  std::size_t form();
  bool formed() const { return formed_; }
  void mark_formed() { formed_ = true; }

  /// Re-read stored conductance into the backward-pass weight cache.
  void refresh_stored_weights();
  void refresh_stored_weights(std::size_t slot);
  const std::vector<Matrix>& stored_weights() const { return stored_; }

  /// Forward one sample ([C,H,W]). Analog mode needs `noise`; Digital mode
  /// uses `weights` when given, else the stored weights. `energy` enables
  /// energy accounting for analog passes.
  Tensor forward(const Tensor& sample, ForwardMode mode, Rng* noise, ForwardTrace* trace,
                 const std::vector<Matrix>* weights = nullptr,
                 const EnergySpec* energy = nullptr) const;

  /// Backward from dL/dlogits through stored (or supplied) weights.
  SlotGrads backward(const ForwardTrace& trace, const Tensor& dlogits,
                     const std::vector<Matrix>* weights = nullptr) const;

 private:
  struct LayerSlots {
    int first = -1;  // slot index, -1 if the layer has no weights
    int second = -1; // recurrent hidden-to-hidden slot
  };

  std::vector<double> multiply(int slot, std::span<const double> x, const QuantizationSpec* q,
                               ForwardMode mode, const BankRead* read, const Matrix* w,
                               double* energy_pj, const EnergySpec* energy,
                               const std::vector<double>* row_sums,
                               std::vector<Drive>* drives) const;

  NetworkSpec spec_;
  HardwareOptions options_;
  std::vector<ScoredLayer> slots_;
  std::vector<LayerSlots> layer_slots_;
  std::vector<Matrix> stored_;
  bool formed_ = false;
};

/// Digitization range for a layer input scaled per sample: lo = min(0, min x),
/// hi chosen so the largest element maps to the top code.
QuantizationSpec auto_range(std::span<const double> x, int bits, double v_read, int adc_bits);

Tensor kernel_from_matrix(const Matrix& w, int out, int in, int kh, int kw);
Tensor fc_from_matrix(const Matrix& w);
/// Inverse of the layouts above, for gradients.
std::vector<double> kernel_grad_to_matrix(const Tensor& dk);
std::vector<double> fc_grad_to_matrix(const Tensor& dw);

}  // namespace rmtopo
