#include "rmtopo/analog_vmm.hpp"

#include <algorithm>
#include <cmath>

#include "rmtopo/errors.hpp"

namespace rmtopo {

void QuantizationSpec::validate() const {
  if (bits < 1 || bits > 16) throw ArgumentError("quantization bits must lie in [1,16]");
  if (!(hi > lo)) throw ArgumentError("quantization range needs hi > lo");
  if (!(v_read > 0)) throw ArgumentError("v_read must be positive");
  if (adc_bits < 0 || adc_bits > 24) throw ArgumentError("adc_bits must lie in [0,24]");
}

double QuantizationSpec::lsb() const { return (hi - lo) / std::ldexp(1.0, bits); }

BitPlanes quantize_input(std::span<const double> x, const QuantizationSpec& q) {
  q.validate();
  BitPlanes bp;
  bp.bits = q.bits;
  bp.length = x.size();
  bp.lo = q.lo;
  bp.lsb = q.lsb();
  bp.planes.assign(static_cast<std::size_t>(q.bits), std::vector<std::uint8_t>(x.size(), 0));
  bp.significance.resize(static_cast<std::size_t>(q.bits));
  for (int k = 0; k < q.bits; ++k) bp.significance[k] = std::ldexp(1.0, q.bits - 1 - k);

  const double levels = std::ldexp(1.0, q.bits);
  const auto max_code = static_cast<std::int64_t>(levels) - 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double scaled = std::floor((x[i] - q.lo) / (q.hi - q.lo) * levels);
    std::int64_t code = 0;
    if (scaled >= static_cast<double>(max_code))
      code = max_code;
    else if (scaled > 0)
      code = static_cast<std::int64_t>(scaled);
    for (int k = 0; k < q.bits; ++k)
      bp.planes[k][i] = static_cast<std::uint8_t>((code >> (q.bits - 1 - k)) & 1);
  }
  return bp;
}

std::uint32_t code_at(const BitPlanes& bp, std::size_t i) {
  std::uint32_t code = 0;
  for (int k = 0; k < bp.bits; ++k) code = (code << 1) | bp.planes[k][i];
  return code;
}

std::vector<double> dequantize(const BitPlanes& bp) {
  std::vector<double> out(bp.length);
  for (std::size_t i = 0; i < bp.length; ++i) {
    double acc = 0.0;
    for (int k = 0; k < bp.bits; ++k) acc += bp.planes[k][i] * bp.significance[k];
    out[i] = bp.lo + acc * bp.lsb;
  }
  return out;
}

std::vector<double> matmul_exact(const Matrix& w, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(w.rows))
    throw DimensionError("matmul_exact: input length " + std::to_string(x.size()) +
                         " does not match " + std::to_string(w.rows) + " rows");
  std::vector<double> y(static_cast<std::size_t>(w.cols), 0.0);
  for (int r = 0; r < w.rows; ++r) {
    const double xr = x[r];
    const double* row = &w.data[static_cast<std::size_t>(r) * w.cols];
    for (int c = 0; c < w.cols; ++c) y[c] += row[c] * xr;
  }
  return y;
}

BankRead read_bank(const DifferentialPairBank& bank, Rng& noise) {
  BankRead rd;
  rd.rows = bank.rows();
  rd.cols = bank.cols();
  rd.beta = bank.beta;
  bank.g_plus.read_conductance_into(noise, rd.g_plus);
  bank.g_minus.read_conductance_into(noise, rd.g_minus);
  return rd;
}

BankRead stored_bank(const DifferentialPairBank& bank) {
  BankRead rd;
  rd.rows = bank.rows();
  rd.cols = bank.cols();
  rd.beta = bank.beta;
  rd.g_plus = bank.g_plus.conductances();
  rd.g_minus = bank.g_minus.conductances();
  return rd;
}

Matrix weights_from_bank(const DifferentialPairBank& bank, bool noisy, Rng* noise) {
  if (noisy && noise == nullptr) throw ArgumentError("weights_from_bank: noisy read needs an rng");
  const BankRead rd = noisy ? read_bank(bank, *noise) : stored_bank(bank);
  Matrix w(rd.rows, rd.cols);
  for (std::size_t i = 0; i < w.data.size(); ++i)
    w.data[i] = rd.beta * (rd.g_plus[i] - rd.g_minus[i]);
  return w;
}

namespace {

// Sense the column currents (uA) of one array for a row-drive pattern.
void sense_columns(const std::vector<double>& g, int rows, int cols,
                   const std::vector<std::uint8_t>* drive, double v_read,
                   std::vector<double>& current) {
  std::fill(current.begin(), current.end(), 0.0);
  for (int r = 0; r < rows; ++r) {
    if (drive && !(*drive)[r]) continue;
    const double* row = &g[static_cast<std::size_t>(r) * cols];
    for (int c = 0; c < cols; ++c) current[c] += row[c] * v_read;
  }
}

void adc_quantize(std::vector<double>& current, int adc_bits, double full_scale) {
  if (adc_bits <= 0 || full_scale <= 0) return;
  const double steps = std::ldexp(1.0, adc_bits) - 1.0;
  for (double& i : current) {
    const double clipped = std::clamp(i, 0.0, full_scale);
    i = std::round(clipped / full_scale * steps) * full_scale / steps;
  }
}

}  // namespace

std::vector<double> vmm_planes(const BankRead& read, const BitPlanes& bp, double v_read,
                               int adc_bits, double adc_full_scale_us) {
  if (bp.length != static_cast<std::size_t>(read.rows))
    throw DimensionError("vmm: input length " + std::to_string(bp.length) +
                         " does not match bank rows " + std::to_string(read.rows));
  const auto cols = static_cast<std::size_t>(read.cols);
  const double full_scale = adc_full_scale_us * v_read * read.rows;
  std::vector<double> i_plus(cols), i_minus(cols), out(cols, 0.0);

  // Digital shift-and-add of plane results, then one LSB rescale.
  std::vector<double> weighted(cols, 0.0);
  for (int k = 0; k < bp.bits; ++k) {
    const auto& plane = bp.planes[k];
    if (std::none_of(plane.begin(), plane.end(), [](std::uint8_t b) { return b != 0; })) continue;
    sense_columns(read.g_plus, read.rows, read.cols, &plane, v_read, i_plus);
    sense_columns(read.g_minus, read.rows, read.cols, &plane, v_read, i_minus);
    adc_quantize(i_plus, adc_bits, full_scale);
    adc_quantize(i_minus, adc_bits, full_scale);
    for (std::size_t c = 0; c < cols; ++c) weighted[c] += bp.significance[k] * (i_plus[c] - i_minus[c]);
  }
  for (std::size_t c = 0; c < cols; ++c) out[c] = read.beta * weighted[c] / v_read * bp.lsb;

  // Range offset: one extra read with every row driven.
  if (bp.lo != 0.0) {
    sense_columns(read.g_plus, read.rows, read.cols, nullptr, v_read, i_plus);
    sense_columns(read.g_minus, read.rows, read.cols, nullptr, v_read, i_minus);
    adc_quantize(i_plus, adc_bits, full_scale);
    adc_quantize(i_minus, adc_bits, full_scale);
    for (std::size_t c = 0; c < cols; ++c)
      out[c] += bp.lo * read.beta * (i_plus[c] - i_minus[c]) / v_read;
  }
  return out;
}

std::vector<double> vmm_bit_sliced(const DifferentialPairBank& bank, std::span<const double> x,
                                   const QuantizationSpec& q, Rng& noise) {
  if (x.size() != static_cast<std::size_t>(bank.rows()))
    throw DimensionError("vmm_bit_sliced: input length " + std::to_string(x.size()) +
                         " does not match bank rows " + std::to_string(bank.rows()));
  const BitPlanes bp = quantize_input(x, q);
  const BankRead rd = read_bank(bank, noise);
  const DeviceSpec& d = bank.g_plus.spec();
  return vmm_planes(rd, bp, q.v_read, q.adc_bits, d.formed_mean_us + 4.0 * d.formed_sigma_us);
}

}  // namespace rmtopo
