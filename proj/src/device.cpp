#include "rmtopo/device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rmtopo/errors.hpp"

namespace rmtopo {

void DeviceSpec::validate() const {
  if (!(form_probability >= 0.0 && form_probability <= 1.0))
    throw ConfigError("form_probability must lie in [0,1]");
  if (!(pristine_conductance_us > 0 && formed_mean_us > 0 && formed_sigma_us > 0 &&
        off_mean_us > 0 && off_sigma_us > 0))
    throw ConfigError("conductances and sigmas must be positive");
  if (!(off_mean_us < formed_mean_us))
    throw ConfigError("off_mean_us must be below formed_mean_us");
  if (read_noise_cv < 0 || write_noise_cv < 0)
    throw ConfigError("noise coefficients must be non-negative");
  if (!(write_tolerance > 0)) throw ConfigError("write_tolerance must be positive");
  if (max_write_pulses < 1) throw ConfigError("max_write_pulses must be >= 1");
}

CrossbarArray::CrossbarArray(int rows, int cols, const DeviceSpec& spec, std::uint64_t seed)
    : rows_(rows), cols_(cols), spec_(spec), rng_(mix_seed(seed)) {
  if (rows < 1 || cols < 1)
    throw DimensionError("crossbar dimensions must be >= 1, got " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  spec_.validate();
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  state_.assign(n, CellState::Pristine);
  conductance_.assign(n, spec_.pristine_conductance_us);
}

CrossbarArray new_array(int rows, int cols, const DeviceSpec& spec, std::uint64_t seed) {
  return CrossbarArray(rows, cols, spec, seed);
}

void CrossbarArray::check_index(int r, int c) const {
  if (!in_range(r, c))
    throw DimensionError("cell (" + std::to_string(r) + "," + std::to_string(c) +
                         ") outside " + std::to_string(rows_) + "x" + std::to_string(cols_));
}

bool CrossbarArray::all_pristine() const {
  return std::all_of(state_.begin(), state_.end(),
                     [](CellState s) { return s == CellState::Pristine; });
}

std::size_t CrossbarArray::count(CellState s) const {
  return static_cast<std::size_t>(std::count(state_.begin(), state_.end(), s));
}

double CrossbarArray::draw_formed() {
  return truncated_normal(rng_, spec_.formed_mean_us, spec_.formed_sigma_us, kFormedFloorUs);
}

double CrossbarArray::draw_off() {
  return truncated_normal(rng_, spec_.off_mean_us, spec_.off_sigma_us, 0.0);
}

FormReport CrossbarArray::electroform() {
  if (!all_pristine()) throw StateError("electroform requires an all-pristine array");
  FormReport report;
  for (std::size_t i = 0; i < state_.size(); ++i) {
    if (uniform01(rng_) < spec_.form_probability) {
      state_[i] = CellState::Formed;
      conductance_[i] = draw_formed();
      ++report.formed_count;
    }
  }
  return report;
}

void CrossbarArray::form_cell(int r, int c) {
  check_index(r, c);
  const auto i = index(r, c);
  if (state_[i] != CellState::Pristine) throw StateError("form_cell on a non-pristine cell");
  state_[i] = CellState::Formed;
  conductance_[i] = draw_formed();
}

int CrossbarArray::reset_cell(int r, int c) {
  check_index(r, c);
  const auto i = index(r, c);
  if (state_[i] != CellState::Formed) return 0;
  state_[i] = CellState::Off;
  conductance_[i] = draw_off();
  return 1;
}

int CrossbarArray::set_cell(int r, int c) {
  check_index(r, c);
  const auto i = index(r, c);
  switch (state_[i]) {
    case CellState::Pristine:
      throw StateError("set on a pristine cell; forming is the only pristine exit");
    case CellState::Formed:
      return 0;
    case CellState::Off:
      state_[i] = CellState::Formed;
      conductance_[i] = draw_formed();
      return 1;
  }
  return 0;
}

WriteResult CrossbarArray::closed_loop_write(int r, int c, double target_us) {
  check_index(r, c);
  if (!(target_us > 0)) throw ArgumentError("closed_loop_write target must be positive");
  const auto i = index(r, c);
  if (state_[i] == CellState::Pristine)
    throw StateError("closed_loop_write on a pristine cell");
  state_[i] = CellState::Formed;

  double g = conductance_[i];
  auto within = [&](double v) {
    return std::abs(v - target_us) / target_us <= spec_.write_tolerance;
  };
  WriteResult res;
  std::uniform_real_distribution<double> step(0.2, 0.6);
  std::normal_distribution<double> noise(0.0, spec_.write_noise_cv);
  while (!within(g) && res.pulses < spec_.max_write_pulses) {
    g += step(rng_) * (target_us - g);
    g *= 1.0 + noise(rng_);
    g = std::max(g, 0.0);
    ++res.pulses;
  }
  res.converged = within(g);
  conductance_[i] = g;
  return res;
}

void CrossbarArray::read_conductance_into(Rng& noise, std::vector<double>& out) const {
  out.resize(conductance_.size());
  if (spec_.read_noise_cv == 0.0) {
    std::copy(conductance_.begin(), conductance_.end(), out.begin());
    return;
  }
  std::normal_distribution<double> eps(0.0, spec_.read_noise_cv);
  for (std::size_t i = 0; i < conductance_.size(); ++i)
    out[i] = std::max(0.0, conductance_[i] * (1.0 + eps(noise)));
}

std::vector<double> CrossbarArray::read_conductance(Rng& noise) const {
  std::vector<double> out;
  read_conductance_into(noise, out);
  return out;
}

void CrossbarArray::restore(std::vector<CellState> states, std::vector<double> conductance_us) {
  if (states.size() != state_.size() || conductance_us.size() != conductance_.size())
    throw DimensionError("restore: grid size mismatch");
  state_ = std::move(states);
  conductance_ = std::move(conductance_us);
}

DifferentialPairBank::DifferentialPairBank(int rows, int cols, const DeviceSpec& spec,
                                           std::uint64_t seed, double beta_)
    : g_plus(rows, cols, spec, derive_seed(seed, 0)),
      g_minus(rows, cols, spec, derive_seed(seed, 1)),
      beta(beta_) {}

FormReport form_complementary(DifferentialPairBank& bank) {
  if (bank.g_plus.rows() != bank.g_minus.rows() || bank.g_plus.cols() != bank.g_minus.cols())
    throw DimensionError("form_complementary: G+ and G- shapes differ");
  if (!bank.g_minus.all_pristine())
    throw StateError("form_complementary: G- array must be pristine");
  FormReport report;
  for (int r = 0; r < bank.rows(); ++r)
    for (int c = 0; c < bank.cols(); ++c)
      if (bank.g_plus.state(r, c) == CellState::Pristine) {
        bank.g_minus.form_cell(r, c);
        ++report.formed_count;
      }
  return report;
}

int reset_pair(DifferentialPairBank& bank, int row, int col) {
  if (!bank.g_plus.in_range(row, col)) throw DimensionError("reset_pair: index out of range");
  return bank.g_plus.reset_cell(row, col) + bank.g_minus.reset_cell(row, col);
}

int set_pair(DifferentialPairBank& bank, int row, int col) {
  if (!bank.g_plus.in_range(row, col)) throw DimensionError("set_pair: index out of range");
  int pulses = 0;
  for (CrossbarArray* a : {&bank.g_plus, &bank.g_minus})
    if (a->state(row, col) == CellState::Off) pulses += a->set_cell(row, col);
  return pulses;
}

PairWriteResult program_pair(DifferentialPairBank& bank, int row, int col,
                             double target_diff_us) {
  if (!bank.g_plus.in_range(row, col)) throw DimensionError("program_pair: index out of range");
  const bool positive = target_diff_us >= 0;
  CrossbarArray& side = positive ? bank.g_plus : bank.g_minus;
  CrossbarArray& other = positive ? bank.g_minus : bank.g_plus;

  PairWriteResult res;
  res.resets = other.reset_cell(row, col);
  if (side.state(row, col) == CellState::Pristine) {
    side.form_cell(row, col);
    res.forms = 1;
  }
  const double target = other.conductance(row, col) + std::abs(target_diff_us);
  const WriteResult w = side.closed_loop_write(row, col, target);
  res.write_pulses = w.pulses;
  res.converged = w.converged;
  return res;
}

void write_grid_csv(std::ostream& os, int rows, int cols, const std::vector<double>& values) {
  if (values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw DimensionError("write_grid_csv: value count does not match rows*cols");
  os << rows << ',' << cols << '\n';
  os << std::setprecision(6);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) os << ',';
      os << values[static_cast<std::size_t>(r) * cols + c];
    }
    os << '\n';
  }
}

std::vector<double> read_grid_csv(std::istream& is, int& rows, int& cols) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("grid csv: missing header");
  {
    std::istringstream hs(line);
    char comma = 0;
    if (!(hs >> rows >> comma >> cols) || comma != ',' || rows < 1 || cols < 1)
      throw ParseError("grid csv: bad header '" + line + "' at line 1");
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    if (!std::getline(is, line))
      throw ParseError("grid csv: expected " + std::to_string(rows) + " rows, got " +
                       std::to_string(r));
    std::istringstream ls(line);
    std::string cell;
    int c = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size() && cell.find_first_not_of(" \r", used) != std::string::npos)
          throw std::invalid_argument(cell);
      } catch (const std::logic_error&) {
        throw ParseError("grid csv: bad value at line " + std::to_string(r + 2) + ", column " +
                         std::to_string(c + 1));
      }
      ++c;
    }
    if (c != cols)
      throw ParseError("grid csv: line " + std::to_string(r + 2) + " has " + std::to_string(c) +
                       " values, expected " + std::to_string(cols));
  }
  return values;
}

void save_grid_csv(const std::string& path, int rows, int cols, const std::vector<double>& values) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_grid_csv(os, rows, cols, values);
}

std::vector<double> load_grid_csv(const std::string& path, int& rows, int& cols) {
  std::ifstream is(path);
  if (!is) throw MissingInputError("cannot open " + path);
  return read_grid_csv(is, rows, cols);
}

}  // namespace rmtopo
