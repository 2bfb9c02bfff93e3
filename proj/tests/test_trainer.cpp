#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rmtopo/data.hpp"
#include "rmtopo/errors.hpp"
#include "rmtopo/trainer.hpp"

using namespace rmtopo;

namespace {

ScoredLayer make_layer(int rows, int cols, std::uint64_t seed) {
  ScoredLayer s{"L", 0, DifferentialPairBank(rows, cols, DeviceSpec{}, seed, 1.0 / 27.2), {}, {}, {}, 0.5};
  s.bank.g_plus.electroform();
  form_complementary(s.bank);
  s.weights = weights_from_bank(s.bank, false).data;
  s.mask.assign(s.size(), 1);
  return s;
}

// Single FC layer softmax classifier on 2x2 inputs.
NetworkSpec linear_spec(int classes) {
  NetworkSpec n;
  n.name = "linear";
  n.input_shape = {1, 2, 2};
  n.layers = {{LayerKind::Flatten, {}}, {LayerKind::FullyConnected, {classes, 4}},
              {LayerKind::SoftmaxXent, {classes}}};
  return n;
}

NetworkSpec tiny_cnn() {
  NetworkSpec n;
  n.name = "tiny";
  n.input_shape = {1, 6, 6};
  n.layers = {{LayerKind::Conv2d, {4, 1, 3, 3}}, {LayerKind::Relu, {}},
              {LayerKind::MaxPool2x2, {0}},      {LayerKind::Flatten, {}},
              {LayerKind::FullyConnected, {3, 16}}, {LayerKind::SoftmaxXent, {3}}};
  return n;
}

Dataset positive_blobs(int classes, int per_class, std::vector<int> shape, std::uint64_t seed) {
  Dataset ds = synth_blobs(classes, per_class, shape, 3.0, seed, 0.2);
  for (auto& t : ds.samples)
    for (double& v : t.data()) v = 0.5 + 0.15 * v;
  return ds;
}

}  // namespace

TEST_CASE("init_scores takes absolute stored weights") {
  ScoredLayer s{"L", 0, DifferentialPairBank(1, 2, DeviceSpec{}, 1, 1.0), {}, {}, {}, 0.5};
  s.bank.g_minus.restore({CellState::Formed, CellState::Pristine}, {0.933, 0.033});
  s.bank.g_plus.restore({CellState::Pristine, CellState::Formed}, {0.033, 0.933});
  init_scores(s);
  REQUIRE(s.scores.size() == 2);
  CHECK(s.scores[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s.scores[0] == s.scores[1]);
  // equal scores: the lowest index is pruned first
  CHECK(select_bottom_k(s.scores, 0.5) == std::vector<std::uint8_t>{0, 1});

  ScoredLayer raw{"R", 0, DifferentialPairBank(2, 2, DeviceSpec{}, 1, 1.0), {}, {}, {}, 0.5};
  CHECK_THROWS_AS(init_scores(raw), StateError);

  auto l = make_layer(5, 7, 3);
  init_scores(l);
  CHECK(l.scores.size() == l.weights.size());
}

TEST_CASE("select_bottom_k") {
  const double s[] = {0.3, 0.1, 0.5, 0.2};
  CHECK(select_bottom_k(s, 0.5) == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(select_bottom_k(s, 0.0) == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK_THROWS_AS(select_bottom_k(s, 1.0), ArgumentError);

  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 20;
    std::vector<double> sc(n);
    for (double& v : sc) v = std::floor(uniform01(rng) * 6);  // plenty of ties
    const double sp = uniform01(rng) * 0.99;
    auto mask = select_bottom_k(sc, sp);
    // oracle: full stable sort by (score, index)
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return sc[a] < sc[b]; });
    const auto k = static_cast<std::size_t>(std::llround(sp * n));
    std::vector<std::uint8_t> want(n, 1);
    for (std::size_t i = 0; i < k; ++i) want[idx[i]] = 0;
    CHECK(mask == want);
  }
}

TEST_CASE("score update rule") {
  ScoredLayer s{"L", 0, DifferentialPairBank(1, 1, DeviceSpec{}, 1, 1.0), {1.0}, {0.2}, {1}, 0.5};
  const double g[] = {2.0}, z[] = {0.5};
  score_update(s, g, z, 0.1);
  CHECK(s.scores[0] == doctest::Approx(0.1).epsilon(1e-15));
  score_update(s, g, z, 0.0);
  CHECK(s.scores[0] == doctest::Approx(0.1).epsilon(1e-15));

  // batch delta equals the sum of per-sample updates at fixed scores
  auto l = make_layer(4, 3, 5);
  init_scores(l);
  const auto base = l.scores;
  Rng rng(2);
  std::vector<double> wgrad(12, 0.0);
  ScoredLayer acc = l;
  for (int n = 0; n < 5; ++n) {
    std::vector<double> node(3), in(4);
    for (double& v : node) v = normal(rng, 0, 1);
    for (double& v : in) v = uniform01(rng);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) wgrad[i * 3 + j] += in[i] * node[j];
    score_update(acc, node, in, 0.05);
  }
  auto d = score_delta(l, wgrad, 0.05);
  for (std::size_t i = 0; i < d.size(); ++i)
    CHECK(base[i] + d[i] == doctest::Approx(acc.scores[i]).epsilon(1e-12));
  CHECK_THROWS_AS(score_delta(l, std::vector<double>(3), 0.1), DimensionError);
}

TEST_CASE("gate_score_update") {
  CHECK(gate_score_update(std::vector<double>{0.05}, 0.1) == std::vector<double>{0.0});
  CHECK(gate_score_update(std::vector<double>{-0.2}, 0.1) == std::vector<double>{-0.2});
  CHECK(gate_score_update(std::vector<double>{0.1, -0.1}, 0.1) == std::vector<double>{0.1, -0.1});
  const std::vector<double> v = {1e-300, -3.0, 0.0, 2.5e-7};
  CHECK(gate_score_update(v, 0.0) == v);
}

TEST_CASE("decay_threshold") {
  auto th = ThresholdState::make(0.1, 0.01, 9);
  CHECK(th.current == 0.1);
  decay_threshold(th, false);
  CHECK(th.current == 0.1);
  decay_threshold(th, true);
  CHECK(th.current == doctest::Approx(0.09).epsilon(1e-12));
  for (int i = 0; i < 8; ++i) decay_threshold(th, true);
  CHECK(th.current == doctest::Approx(0.01).epsilon(1e-12));
  for (int i = 0; i < 5; ++i) decay_threshold(th, true);
  CHECK(th.current == 0.01);
  CHECK(th.t_counter == 14);

  auto same = ThresholdState::make(0.0, 0.0, 3);
  decay_threshold(same, true);
  CHECK(same.current == 0.0);
  CHECK_THROWS_AS(ThresholdState::make(0.1, 0.01, 0), ConfigError);
  CHECK_THROWS_AS(ThresholdState::make(-0.1, 0.01, 1), ConfigError);
}

TEST_CASE("sync_mask_to_hardware") {
  auto l = make_layer(4, 4, 7);
  std::vector<std::uint8_t> ones(16, 1);
  auto none = sync_mask_to_hardware(l, ones, ones);
  CHECK(none.programming_operations() == 0);
  CHECK(mask_hardware_coherent(l));

  auto m1 = ones;
  m1[3] = 0;
  auto c1 = sync_mask_to_hardware(l, ones, m1);
  l.mask = m1;
  CHECK(c1.resets == 1);
  auto m2 = m1;
  m2[3] = 1;
  m2[5] = 0;
  auto c2 = sync_mask_to_hardware(l, m1, m2);
  l.mask = m2;
  CHECK(c2.resets >= 1);
  CHECK(c2.sets >= 1);
  CHECK(mask_hardware_coherent(l));
  // reinstated weight copy is refreshed from the new conductance
  const auto w = weights_from_bank(l.bank, false);
  CHECK(l.weights[3] == w.data[3]);

  // state scan oracle over random masks
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> next(16);
    for (auto& b : next) b = uniform01(rng) < 0.5;
    sync_mask_to_hardware(l, l.mask, next);
    l.mask = next;
    for (int i = 0; i < 16; ++i) {
      const int r = i / 4, c = i % 4;
      const int formed = (l.bank.g_plus.state(r, c) == CellState::Formed) +
                         (l.bank.g_minus.state(r, c) == CellState::Formed);
      CHECK(formed == (next[i] ? 1 : 0));
    }
    CHECK(mask_hardware_coherent(l));
  }
  CHECK_THROWS_AS(sync_mask_to_hardware(l, ones, std::vector<std::uint8_t>(3)), DimensionError);
}

TEST_CASE("train_topology with zero epochs") {
  HardwareNetwork net(tiny_cnn(), DeviceSpec{}, 3, HardwareOptions{});
  net.form();
  auto ds = positive_blobs(3, 10, {1, 6, 6}, 1);
  TrainOptions opt;
  opt.epochs = 0;
  auto r = train_topology(net, ds, ds, ds, opt);
  CHECK(r.rows.size() == 1);
  CHECK(r.rows[0].epoch == 0);
  CHECK(r.ledger.total().programming_operations() == 0);
  CHECK(r.ledger.total().write_pulses == 0);
}

TEST_CASE("train_topology keeps exact sparsity and never tunes conductance") {
  HardwareNetwork net(tiny_cnn(), DeviceSpec{}, 5, HardwareOptions{});
  net.form();
  auto ds = positive_blobs(3, 20, {1, 6, 6}, 2);
  auto sp = split(ds, 40, 10, 10, 3);
  TrainOptions opt;
  opt.epochs = 3;
  opt.eta = 0.01;
  opt.t_init = opt.t_end = 0.0;
  int calls = 0;
  opt.on_epoch = [&](int epoch, const HardwareNetwork& n) {
    ++calls;
    if (epoch == 0) return;
    for (const auto& s : n.slots()) {
      CHECK(s.pruned_count() == static_cast<std::size_t>(std::llround(0.5 * s.size())));
      CHECK(mask_hardware_coherent(s));
    }
  };
  auto r = train_topology(net, sp.train, sp.val, sp.test, opt);
  CHECK(calls == 4);
  CHECK(r.rows.size() == 4);
  CHECK(r.ledger.total().writes == 0);
  CHECK(r.ledger.total().write_pulses == 0);
  CHECK(r.ledger.total().resets > 0);
  for (const auto& row : r.rows) {
    CHECK(row.cumulative.writes == 0);
    CHECK(std::isfinite(row.loss));
  }
}

TEST_CASE("threshold in a run follows the new-best count") {
  HardwareNetwork net(tiny_cnn(), DeviceSpec{}, 8, HardwareOptions{});
  net.form();
  auto ds = positive_blobs(3, 20, {1, 6, 6}, 4);
  auto sp = split(ds, 40, 10, 10, 5);
  TrainOptions opt;
  opt.epochs = 6;
  opt.eta = 0.01;
  opt.t_init = 1e-4;
  opt.t_end = 1e-5;
  opt.alpha = 4;
  auto r = train_topology(net, sp.train, sp.val, sp.test, opt);
  double best = -1;
  int t = 0;
  CHECK(r.rows[0].threshold == 1e-4);
  for (std::size_t e = 1; e < r.rows.size(); ++e) {
    if (r.rows[e].val_acc > best) best = r.rows[e].val_acc, ++t;
    const double want = std::max(1e-5, 1e-4 - t * (1e-4 - 1e-5) / 4);
    CHECK(r.rows[e].threshold == want);
  }
}

TEST_CASE("weight optimization extremes") {
  auto ds = positive_blobs(3, 8, {1, 2, 2}, 6);
  TrainOptions opt;
  opt.epochs = 1;
  opt.batch_size = 6;
  opt.eta_wo = 0.05;

  SUBCASE("infinite T_w freezes the network") {
    HardwareNetwork net(linear_spec(3), DeviceSpec{}, 2, HardwareOptions{});
    net.form();
    const auto before = net.slots()[0].bank.g_plus.conductances();
    opt.t_w = std::numeric_limits<double>::infinity();
    auto r = train_weights_baseline(net, ds, ds, ds, opt);
    CHECK(r.ledger.total().programming_operations() == 0);
    CHECK(net.slots()[0].bank.g_plus.conductances() == before);
  }
  SUBCASE("zero T_w writes every weight with a gradient every step") {
    HardwareNetwork net(linear_spec(3), DeviceSpec{}, 2, HardwareOptions{});
    net.form();
    opt.t_w = 0.0;
    auto r = train_weights_baseline(net, ds, ds, ds, opt);
    const std::size_t steps = (ds.size() + 5) / 6;
    CHECK(r.ledger.total().writes == steps * 12);
  }
  SUBCASE("budget-matched mode respects its budget") {
    HardwareNetwork net(linear_spec(3), DeviceSpec{}, 2, HardwareOptions{});
    net.form();
    opt.mode = WoMode::BudgetMatched;
    opt.budget = 10;
    opt.epochs = 2;
    auto r = train_weights_baseline(net, ds, ds, ds, opt);
    CHECK(r.ledger.total().programming_operations() <= 10);
    CHECK(r.t_w > 0);
    opt.budget = 0;
    CHECK_THROWS_AS(train_weights_baseline(net, ds, ds, ds, opt), ConfigError);
  }
}

TEST_CASE("training is independent of the worker count") {
  auto ds = positive_blobs(3, 12, {1, 6, 6}, 7);
  auto sp = split(ds, 24, 6, 6, 1);
  TrainReport reports[2];
  for (int w : {1, 3}) {
    HardwareNetwork net(tiny_cnn(), DeviceSpec{}, 9, HardwareOptions{});
    net.form();
    TrainOptions opt;
    opt.epochs = 2;
    opt.eta = 0.01;
    opt.workers = w;
    reports[w == 3] = train_topology(net, sp.train, sp.val, sp.test, opt);
  }
  REQUIRE(reports[0].rows.size() == reports[1].rows.size());
  for (std::size_t i = 0; i < reports[0].rows.size(); ++i) {
    CHECK(reports[0].rows[i].loss == reports[1].rows[i].loss);
    CHECK(reports[0].rows[i].test_acc == reports[1].rows[i].test_acc);
    CHECK(reports[0].rows[i].fwd_energy_uj == reports[1].rows[i].fwd_energy_uj);
  }
}

TEST_CASE("replay_energy") {
  auto ds = positive_blobs(3, 6, {1, 6, 6}, 3);
  HardwareNetwork a(tiny_cnn(), DeviceSpec{}, 4, HardwareOptions{});
  HardwareNetwork b(tiny_cnn(), DeviceSpec{}, 5, HardwareOptions{});
  a.form();
  b.form();
  const EnergySpec spec;
  const auto self = replay_energy(a, {&a}, ds, 17, spec);
  const Evaluation ev = evaluate(a, ds, 17, &spec);
  REQUIRE(self.size() == 1);
  CHECK(self[0] == doctest::Approx(ev.mean_energy_uj).epsilon(1e-12));

  // same drives, every pair of b pruned: only off-state and overhead energy left
  for (ScoredLayer& s : b.slots())
    for (int r = 0; r < s.rows(); ++r)
      for (int c = 0; c < s.cols(); ++c) reset_pair(s.bank, r, c);
  EnergySpec analog_only;
  analog_only.digital_overhead_pj_per_mac = 0.0;
  const auto both = replay_energy(a, {&a, &b}, ds, 17, analog_only, 2);
  CHECK(both[1] < 0.01 * both[0]);
  CHECK(both[1] > 0);

  HardwareNetwork other(linear_spec(3), DeviceSpec{}, 1, HardwareOptions{});
  CHECK_THROWS_AS(replay_energy(a, {&other}, ds, 17, spec), DimensionError);
}

TEST_CASE("unformed network is rejected") {
  HardwareNetwork net(tiny_cnn(), DeviceSpec{}, 3, HardwareOptions{});
  auto ds = positive_blobs(3, 2, {1, 6, 6}, 1);
  CHECK_THROWS_AS(train_topology(net, ds, ds, ds, TrainOptions{}), StateError);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  CHECK(std::all_of(hit.begin(), hit.end(), [](int v) { return v == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw NumericError("boom");
                  }),
                  NumericError);
}
