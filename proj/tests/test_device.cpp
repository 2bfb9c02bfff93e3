#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "rmtopo/analog_vmm.hpp"
#include "rmtopo/device.hpp"
#include "rmtopo/errors.hpp"
#include "oracles.hpp"

using namespace rmtopo;

TEST_CASE("new_array starts pristine") {
  DeviceSpec spec;
  auto a = new_array(2, 3, spec, 42);
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
  for (double g : a.conductances()) CHECK(g == 0.033);
  CHECK(a.all_pristine());

  auto one = new_array(1, 1, spec, 0);
  CHECK(one.size() == 1);
  CHECK(one.state(0, 0) == CellState::Pristine);

  auto x = new_array(100, 100, spec, 7);
  auto y = new_array(100, 100, spec, 7);
  CHECK(x.size() == 10000);
  CHECK(x.conductances() == y.conductances());

  CHECK_THROWS_AS(new_array(0, 3, spec, 1), DimensionError);
  spec.form_probability = 1.5;
  CHECK_THROWS_AS(new_array(2, 2, spec, 1), ConfigError);
}

TEST_CASE("electroform count follows the binomial law") {
  // exact two-sided mass of Binomial(10000, 0.5) inside [4800, 5200]
  const double mass = oracle::binomial_mass(10000, 0.5, 4800, 5200);
  REQUIRE(mass >= 0.999);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto a = new_array(100, 100, DeviceSpec{}, seed);
    auto rep = a.electroform();
    CHECK(rep.formed_count >= 4800);
    CHECK(rep.formed_count <= 5200);
    CHECK(rep.formed_count == a.count(CellState::Formed));
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.states()[i] == CellState::Formed) CHECK(a.conductances()[i] >= kFormedFloorUs);
  }
}

TEST_CASE("electroform degenerate probabilities") {
  DeviceSpec all;
  all.form_probability = 1.0;
  auto a = new_array(10, 10, all, 3);
  CHECK(a.electroform().formed_count == 100);
  CHECK(a.count(CellState::Formed) == 100);

  DeviceSpec none;
  none.form_probability = 0.0;
  auto b = new_array(10, 10, none, 3);
  const auto before = b.conductances();
  CHECK(b.electroform().formed_count == 0);
  CHECK(b.conductances() == before);
  CHECK(b.all_pristine());

  CHECK_THROWS_AS(a.electroform(), StateError);
}

TEST_CASE("form_complementary forms the complement") {
  DifferentialPairBank bank(1, 4, DeviceSpec{}, 9, 1.0);
  bank.g_plus.form_cell(0, 0);
  bank.g_plus.form_cell(0, 2);
  auto rep = form_complementary(bank);
  CHECK(rep.formed_count == 2);
  const CellState want[] = {CellState::Pristine, CellState::Formed, CellState::Pristine,
                            CellState::Formed};
  for (int c = 0; c < 4; ++c) CHECK(bank.g_minus.state(0, c) == want[c]);

  DeviceSpec all;
  all.form_probability = 1.0;
  DifferentialPairBank full(5, 5, all, 2, 1.0);
  full.g_plus.electroform();
  CHECK(form_complementary(full).formed_count == 0);
  CHECK(full.g_minus.all_pristine());
  CHECK_THROWS_AS(form_complementary(bank), StateError);
}

TEST_CASE("formed bank weights are two opposite-sign modes") {
  const double beta = 1.0 / 27.2;
  DifferentialPairBank bank(100, 100, DeviceSpec{}, 11, beta);
  bank.g_plus.electroform();
  form_complementary(bank);
  const Matrix w = weights_from_bank(bank, false);
  double pos = 0, neg = 0;
  int np = 0, nn = 0;
  for (double v : w.data) {
    if (v > 0) pos += v, ++np;
    else neg += v, ++nn;
  }
  CHECK(np + nn == 10000);
  CHECK(pos / np == doctest::Approx(beta * 27.2).epsilon(0.15));
  CHECK(neg / nn == doctest::Approx(-beta * 27.2).epsilon(0.15));
}

TEST_CASE("reset_pair and set_pair transitions") {
  DifferentialPairBank bank(1, 2, DeviceSpec{}, 5, 1.0);
  bank.g_plus.form_cell(0, 0);
  CHECK(reset_pair(bank, 0, 0) == 1);
  CHECK(bank.g_plus.state(0, 0) == CellState::Off);
  CHECK(bank.g_minus.state(0, 0) == CellState::Pristine);
  CHECK(std::abs(bank.g_plus.conductance(0, 0) - bank.g_minus.conductance(0, 0)) <= 0.2);

  // (Off, Off) stays put
  bank.g_plus.form_cell(0, 1);
  bank.g_minus.form_cell(0, 1);
  reset_pair(bank, 0, 1);
  const double gp = bank.g_plus.conductance(0, 1), gm = bank.g_minus.conductance(0, 1);
  CHECK(reset_pair(bank, 0, 1) == 0);
  CHECK(bank.g_plus.conductance(0, 1) == gp);
  CHECK(bank.g_minus.conductance(0, 1) == gm);

  CHECK(set_pair(bank, 0, 0) == 1);
  CHECK(bank.g_plus.state(0, 0) == CellState::Formed);
  CHECK(bank.g_minus.state(0, 0) == CellState::Pristine);
  CHECK(set_pair(bank, 0, 0) == 0);

  CHECK_THROWS_AS(reset_pair(bank, 1, 0), DimensionError);
  CHECK_THROWS_AS(bank.g_minus.set_cell(0, 0), StateError);
}

TEST_CASE("100 prune/reinstate cycles keep a pair functional") {
  DifferentialPairBank bank(1, 1, DeviceSpec{}, 21, 1.0);
  bank.g_plus.form_cell(0, 0);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(reset_pair(bank, 0, 0) == 1);
    const double off = bank.g_plus.conductance(0, 0);
    CHECK(off >= 0.0);
    CHECK(off < 0.07 + 6 * 0.02);
    CHECK(std::abs(off - bank.g_minus.conductance(0, 0)) <= 0.2);
    REQUIRE(set_pair(bank, 0, 0) == 1);
    const double on = bank.g_plus.conductance(0, 0);
    CHECK(on >= kFormedFloorUs);
    CHECK(std::abs(on - 27.2) < 6 * 2.5);
  }
}

TEST_CASE("reinstated conductance lies in the formed support") {
  auto a = new_array(1, 1, DeviceSpec{}, 99);
  a.form_cell(0, 0);
  for (int i = 0; i < 1000; ++i) {
    a.reset_cell(0, 0);
    a.set_cell(0, 0);
    CHECK(a.conductance(0, 0) > kFormedFloorUs);
  }
}

TEST_CASE("read noise") {
  DeviceSpec quiet;
  quiet.read_noise_cv = 0.0;
  auto a = new_array(4, 4, quiet, 1);
  a.electroform();
  Rng rng(3);
  CHECK(a.read_conductance(rng) == a.conductances());

  auto b = new_array(1, 2, DeviceSpec{}, 2);
  b.form_cell(0, 0);
  b.form_cell(0, 1);
  b.reset_cell(0, 1);
  const double g = b.conductance(0, 0);
  const int n = 10000;
  double sum = 0, sq = 0;
  bool nonneg = true;
  for (int i = 0; i < n; ++i) {
    auto r = b.read_conductance(rng);
    sum += r[0];
    sq += r[0] * r[0];
    nonneg = nonneg && r[1] >= 0.0;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sq - n * mean * mean) / (n - 1));
  const double cv = sd / g;
  // 99.99% chi-squared interval for the sample sd, well inside [0.8, 1.2]
  const auto [lo, hi] = oracle::sd_ratio_interval(n, 3.89);
  REQUIRE(lo >= 0.8);
  REQUIRE(hi <= 1.2);
  CHECK(cv >= lo * 0.03);
  CHECK(cv <= hi * 0.03);
  CHECK(nonneg);
}

TEST_CASE("closed-loop write") {
  auto a = new_array(1, 1, DeviceSpec{}, 4);
  a.restore({CellState::Formed}, {26.0});
  auto r = a.closed_loop_write(0, 0, 27.0);
  CHECK(r.pulses == 0);
  CHECK(r.converged);
  CHECK(a.conductance(0, 0) == 26.0);

  int fast = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto c = new_array(1, 1, DeviceSpec{}, seed);
    c.restore({CellState::Formed}, {5.0});
    auto w = c.closed_loop_write(0, 0, 27.0);
    if (w.converged && w.pulses <= 30) ++fast;
    if (w.converged) CHECK(std::abs(c.conductance(0, 0) - 27.0) / 27.0 <= 0.10);
    CHECK(w.pulses <= 100);
  }
  CHECK(fast >= 990);

  auto p = new_array(1, 1, DeviceSpec{}, 4);
  CHECK_THROWS_AS(p.closed_loop_write(0, 0, 10.0), StateError);
}

TEST_CASE("program_pair reaches the target difference") {
  DifferentialPairBank bank(1, 1, DeviceSpec{}, 8, 1.0);
  bank.g_plus.form_cell(0, 0);
  form_complementary(bank);
  auto r = program_pair(bank, 0, 0, -20.0);
  CHECK(r.resets == 1);
  CHECK(r.forms == 1);
  CHECK(bank.g_plus.state(0, 0) == CellState::Off);
  const double d = bank.g_plus.conductance(0, 0) - bank.g_minus.conductance(0, 0);
  if (r.converged) CHECK(std::abs(d + 20.0) <= 0.1 * 20.0 + 0.2);
}

TEST_CASE("grid csv round trip at 6 significant digits") {
  std::vector<double> v = {0.033, 27.123456789, 3.33, 0.0701};
  std::stringstream ss;
  write_grid_csv(ss, 2, 2, v);
  int r = 0, c = 0;
  auto back = read_grid_csv(ss, r, c);
  CHECK(r == 2);
  CHECK(c == 2);
  for (std::size_t i = 0; i < v.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v[i]);
    CHECK(back[i] == std::strtod(buf, nullptr));
  }
  std::stringstream bad("2,2\n1,2\n3\n");
  CHECK_THROWS_AS(read_grid_csv(bad, r, c), ParseError);
}
