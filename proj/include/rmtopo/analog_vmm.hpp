#pragma once

// Bit-sliced analogue vector-matrix multiplication over differential pairs.
//
// Orientation (fixed repo-wide): a bank has one row per input and one column
// per output. Logical weights W[r][c] = beta * (G+[r][c] - G-[r][c]) and the
// product is y = W^T x, i.e. y[c] = sum_r W[r][c] * x[r]. Rows are driven,
// column currents are sensed.

#include <cstdint>
#include <span>
#include <vector>

#include "rmtopo/device.hpp"
#include "rmtopo/random.hpp"

namespace rmtopo {

struct QuantizationSpec {
  int bits = 4;
  double lo = 0.0;
  double hi = 1.0;
  double v_read = 0.1;
  /// Column-current ADC resolution; 0 disables ADC quantization.
  int adc_bits = 0;

  void validate() const;
  double lsb() const;
};

struct BitPlanes {
  int bits = 0;
  std::size_t length = 0;
  double lo = 0.0;
  double lsb = 1.0;
  /// planes[k][i] is bit (bits-1-k) of element i's code; plane 0 is the MSB.
  std::vector<std::vector<std::uint8_t>> planes;
  std::vector<double> significance;
};

BitPlanes quantize_input(std::span<const double> x, const QuantizationSpec& q);
std::vector<double> dequantize(const BitPlanes& bp);
/// Integer code of element i (sum of plane bits times significance).
std::uint32_t code_at(const BitPlanes& bp, std::size_t i);

/// Dense row-major matrix in bank orientation (rows = inputs).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Exact y = W^T x.
std::vector<double> matmul_exact(const Matrix& w, std::span<const double> x);

/// beta * (G+ - G-) from stored conductance, or from one noisy read.
Matrix weights_from_bank(const DifferentialPairBank& bank, bool noisy, Rng* noise = nullptr);

/// One noisy read of both arrays, shared by every vector multiplied against it.
struct BankRead {
  int rows = 0;
  int cols = 0;
  double beta = 1.0;
  std::vector<double> g_plus;
  std::vector<double> g_minus;
};

BankRead read_bank(const DifferentialPairBank& bank, Rng& noise);
BankRead stored_bank(const DifferentialPairBank& bank);

/// Bit-plane evaluation of W^T x against a read snapshot. `adc_bits` > 0
/// quantizes each sensed column current.
std::vector<double> vmm_planes(const BankRead& read, const BitPlanes& bp, double v_read,
                               int adc_bits = 0, double adc_full_scale_us = 0.0);

/// Quantize x, read the bank once with fresh noise, multiply plane by plane.
std::vector<double> vmm_bit_sliced(const DifferentialPairBank& bank, std::span<const double> x,
                                   const QuantizationSpec& q, Rng& noise);

}  // namespace rmtopo
