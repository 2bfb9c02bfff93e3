#pragma once

// Behavioral model of resistive-memory cells and crossbars.
//
// Conductances are in microsiemens throughout. A cell starts Pristine
// (insulating), becomes Formed through electroforming, is switched Off by a
// reset pulse and back to Formed by a set pulse. Closed-loop writes tune the
// conductance of a non-pristine cell toward a target.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rmtopo/random.hpp"

namespace rmtopo {

struct DeviceSpec {
  double pristine_conductance_us = 0.033;
  double formed_mean_us = 27.2;
  double formed_sigma_us = 2.5;
  double off_mean_us = 0.07;
  double off_sigma_us = 0.02;
  double read_noise_cv = 0.03;
  double form_probability = 0.5;
  double write_tolerance = 0.10;
  int max_write_pulses = 100;
  double write_noise_cv = 0.05;

  /// Throws ConfigError when any invariant is violated.
  void validate() const;
};

/// Lower cut of the formed-conductance distribution (1 / 300 kOhm).
inline constexpr double kFormedFloorUs = 3.33;

enum class CellState : std::uint8_t { Pristine = 0, Formed = 1, Off = 2 };

struct FormReport {
  std::size_t formed_count = 0;
};

struct WriteResult {
  int pulses = 0;
  bool converged = false;
};

class CrossbarArray {
 public:
  CrossbarArray(int rows, int cols, const DeviceSpec& spec, std::uint64_t seed);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return conductance_.size(); }
  const DeviceSpec& spec() const { return spec_; }

  CellState state(int r, int c) const { return state_[index(r, c)]; }
  double conductance(int r, int c) const { return conductance_[index(r, c)]; }
  const std::vector<double>& conductances() const { return conductance_; }
  const std::vector<CellState>& states() const { return state_; }

  bool all_pristine() const;
  std::size_t count(CellState s) const;

  /// Each Pristine cell forms independently with spec.form_probability.
  FormReport electroform();
  /// Force one Pristine cell into the Formed state.
  void form_cell(int r, int c);
  /// Formed -> Off. Returns pulses applied (0 or 1).
  int reset_cell(int r, int c);
  /// Off -> Formed with a freshly drawn conductance. Returns pulses (0 or 1).
  int set_cell(int r, int c);
  WriteResult closed_loop_write(int r, int c, double target_us);

  /// Noisy, non-destructive read of the whole grid.
  std::vector<double> read_conductance(Rng& noise) const;
  void read_conductance_into(Rng& noise, std::vector<double>& out) const;

  /// Restore a previously exported grid (used for snapshots).
  void restore(std::vector<CellState> states, std::vector<double> conductance_us);

  bool in_range(int r, int c) const { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

 private:
  void check_index(int r, int c) const;
  double draw_formed();
  double draw_off();

  int rows_;
  int cols_;
  DeviceSpec spec_;
  std::vector<CellState> state_;
  std::vector<double> conductance_;
  Rng rng_;
};

CrossbarArray new_array(int rows, int cols, const DeviceSpec& spec, std::uint64_t seed);

/// Signed weights realized as beta * (G+ - G-).
struct DifferentialPairBank {
  CrossbarArray g_plus;
  CrossbarArray g_minus;
  double beta = 1.0;

  DifferentialPairBank(int rows, int cols, const DeviceSpec& spec, std::uint64_t seed,
                       double beta);

  int rows() const { return g_plus.rows(); }
  int cols() const { return g_plus.cols(); }
  std::size_t size() const { return g_plus.size(); }
};

/// Forms every G- cell whose G+ partner stayed Pristine.
FormReport form_complementary(DifferentialPairBank& bank);
int reset_pair(DifferentialPairBank& bank, int row, int col);
int set_pair(DifferentialPairBank& bank, int row, int col);

/// Pulse bookkeeping for one pair reprogramming in weight optimization.
struct PairWriteResult {
  int forms = 0;
  int resets = 0;
  int write_pulses = 0;
  bool converged = true;
};

/// Programs a pair toward logical difference `target_diff_us` (G+ - G-).
/// The cell on the sign side of the target is written to (other + |d|);
/// when the opposite cell is Formed it is reset first, and a Pristine cell
/// on the written side is formed before tuning.
PairWriteResult program_pair(DifferentialPairBank& bank, int row, int col,
                             double target_diff_us);

// CSV exchange: header "rows,cols", then one line per row, values in uS
// with 6 significant digits.
void write_grid_csv(std::ostream& os, int rows, int cols, const std::vector<double>& values);
std::vector<double> read_grid_csv(std::istream& is, int& rows, int& cols);
void save_grid_csv(const std::string& path, int rows, int cols, const std::vector<double>& values);
std::vector<double> load_grid_csv(const std::string& path, int& rows, int& cols);

}  // namespace rmtopo
