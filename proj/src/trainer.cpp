#include "rmtopo/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "rmtopo/errors.hpp"
#include "rmtopo/layers.hpp"

namespace rmtopo {

ThresholdState ThresholdState::make(double t_init, double t_end, double alpha) {
  if (!(alpha > 0)) throw ConfigError("threshold alpha must be positive");
  if (t_init < 0 || t_end < 0) throw ConfigError("thresholds must be non-negative");
  ThresholdState th;
  th.t_init = t_init;
  th.t_end = t_end;
  th.alpha = alpha;
  th.current = t_init;
  return th;
}

void decay_threshold(ThresholdState& th, bool new_best) {
  if (!(th.alpha > 0)) throw ConfigError("threshold alpha must be positive");
  if (!new_best) return;
  th.t_counter += 1;
  th.current = std::max(th.t_end, th.t_init - th.t_counter * (th.t_init - th.t_end) / th.alpha);
}

std::vector<double> gate_score_update(std::span<const double> delta, double threshold) {
  std::vector<double> out(delta.begin(), delta.end());
  for (double& d : out)
    if (!(std::abs(d) >= threshold)) d = 0.0;
  return out;
}

void init_scores(ScoredLayer& layer) {
  if (layer.bank.g_plus.count(CellState::Formed) + layer.bank.g_minus.count(CellState::Formed) +
          layer.bank.g_plus.count(CellState::Off) + layer.bank.g_minus.count(CellState::Off) ==
      0)
    throw StateError("init_scores: bank " + layer.name + " has not been formed");
  const Matrix w = weights_from_bank(layer.bank, false);
  layer.scores.resize(w.data.size());
  for (std::size_t i = 0; i < w.data.size(); ++i) layer.scores[i] = std::abs(w.data[i]);
}

std::vector<std::uint8_t> select_bottom_k(std::span<const double> scores, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ArgumentError("sparsity must lie in [0,1)");
  const std::size_t n = scores.size();
  const auto k = static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(n)));
  std::vector<std::uint8_t> mask(n, 1);
  if (k == 0) return mask;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), less);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.begin() + static_cast<std::ptrdiff_t>(k), less);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 0;
  return mask;
}

std::vector<std::uint8_t> select_subnetwork(const ScoredLayer& layer) {
  if (layer.scores.size() != layer.size())
    throw StateError("select_subnetwork: scores not initialized for " + layer.name);
  return select_bottom_k(layer.scores, layer.sparsity);
}

std::vector<double> score_delta(const ScoredLayer& layer, std::span<const double> weight_grad,
                                double eta) {
  if (weight_grad.size() != layer.weights.size())
    throw DimensionError("score_delta: gradient size " + std::to_string(weight_grad.size()) +
                         " vs " + std::to_string(layer.weights.size()) + " weights");
  std::vector<double> d(weight_grad.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = -eta * weight_grad[i] * layer.weights[i];
  return d;
}

void score_update(ScoredLayer& layer, std::span<const double> node_grad,
                  std::span<const double> inputs, double eta) {
  const auto rows = static_cast<std::size_t>(layer.rows());
  const auto cols = static_cast<std::size_t>(layer.cols());
  if (node_grad.size() != cols || inputs.size() != rows || layer.scores.size() != rows * cols ||
      layer.weights.size() != rows * cols)
    throw DimensionError("score_update: shape mismatch for " + layer.name);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      layer.scores[i * cols + j] -= eta * node_grad[j] * layer.weights[i * cols + j] * inputs[i];
}

LedgerCounts sync_mask_to_hardware(ScoredLayer& layer, const std::vector<std::uint8_t>& old_mask,
                                   const std::vector<std::uint8_t>& new_mask) {
  if (old_mask.size() != new_mask.size() || new_mask.size() != layer.size())
    throw DimensionError("sync_mask_to_hardware: mask size mismatch for " + layer.name);
  LedgerCounts counts;
  const int cols = layer.cols();
  for (std::size_t i = 0; i < new_mask.size(); ++i) {
    if (old_mask[i] == new_mask[i]) continue;
    const int r = static_cast<int>(i / cols), c = static_cast<int>(i % cols);
    if (old_mask[i] && !new_mask[i]) {
      counts.resets += static_cast<std::uint64_t>(reset_pair(layer.bank, r, c));
    } else {
      counts.sets += static_cast<std::uint64_t>(set_pair(layer.bank, r, c));
      layer.weights[i] =
          layer.bank.beta * (layer.bank.g_plus.conductance(r, c) - layer.bank.g_minus.conductance(r, c));
    }
  }
  layer.mask = new_mask;
  return counts;
}

bool mask_hardware_coherent(const ScoredLayer& layer) {
  for (int r = 0; r < layer.rows(); ++r)
    for (int c = 0; c < layer.cols(); ++c) {
      const int formed = (layer.bank.g_plus.state(r, c) == CellState::Formed) +
                         (layer.bank.g_minus.state(r, c) == CellState::Formed);
      const bool kept = layer.mask[layer.bank.g_plus.index(r, c)] != 0;
      if (kept ? formed != 1 : formed != 0) return false;
    }
  return true;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  pool.reserve(w);
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        if (failed) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

namespace {

Tensor probabilities_of(const Tensor& logits) {
  Tensor p = logits;
  const double zmax = *std::max_element(p.data().begin(), p.data().end());
  double sum = 0.0;
  for (double& v : p.data()) sum += (v = std::exp(v - zmax));
  for (double& v : p.data()) v /= sum;
  return p;
}

int argmax_of(const Tensor& t) {
  return static_cast<int>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

// Seeds for the independent random streams of one run.
constexpr std::uint64_t kTrainNoise = 0x7a11;
constexpr std::uint64_t kValNoise = 0x5a1d;
constexpr std::uint64_t kTestNoise = 0x7e57;
constexpr std::uint64_t kShuffle = 0x5f1e;

struct StepResult {
  SlotGrads grads;
  double loss = 0.0;
  std::size_t correct = 0;
};

// Forward (analog, noisy) and digital backward over one mini-batch; gradients
// are summed in sample order so the result does not depend on `workers`.
StepResult run_batch(const HardwareNetwork& net, const Dataset& train,
                     std::span<const std::size_t> batch, std::uint64_t noise_root, int workers) {
  struct Sample {
    SlotGrads grads;
    double loss = 0.0;
    bool correct = false;
  };
  std::vector<Sample> per(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t k) {
    const std::size_t idx = batch[k];
    Rng noise(derive_seed(noise_root, idx));
    ForwardTrace trace;
    const Tensor logits = net.forward(train.samples[idx], ForwardMode::Analog, &noise, &trace);
    const XentResult xr = softmax_xent(logits, {train.labels[idx]});
    per[k].loss = xr.loss;
    per[k].correct = argmax_of(logits) == train.labels[idx];
    per[k].grads = net.backward(trace, xr.dlogits);
  });
  StepResult out;
  out.grads.resize(net.slots().size());
  for (std::size_t s = 0; s < out.grads.size(); ++s) out.grads[s].assign(net.slots()[s].size(), 0.0);
  for (const Sample& smp : per) {
    out.loss += smp.loss;
    out.correct += smp.correct ? 1 : 0;
    for (std::size_t s = 0; s < out.grads.size(); ++s)
      for (std::size_t i = 0; i < out.grads[s].size(); ++i) out.grads[s][i] += smp.grads[s][i];
  }
  if (!std::isfinite(out.loss)) throw NumericError("non-finite training loss");
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

EpochRow eval_row(const HardwareNetwork& net, const Dataset& train, const Dataset& val,
                  const Dataset& test, const TrainOptions& opt, int epoch, double train_acc,
                  double loss, const ProgrammingLedger& ledger, bool eval_train) {
  EpochRow row;
  row.epoch = epoch;
  row.loss = loss;
  row.train_acc = eval_train && train.size() > 0
                      ? evaluate(net, train, derive_seed(opt.seed, kTrainNoise + 1000), nullptr, opt.workers).accuracy
                      : train_acc;
  row.val_acc = val.size() ? evaluate(net, val, derive_seed(opt.seed, kValNoise + epoch), nullptr, opt.workers).accuracy : 0.0;
  if (test.size()) {
    const Evaluation ev = evaluate(net, test, derive_seed(opt.seed, kTestNoise + epoch), &opt.energy, opt.workers);
    row.test_acc = ev.accuracy;
    row.fwd_energy_uj = ev.mean_energy_uj;
  }
  row.cumulative = ledger.total();
  return row;
}

void check_ready(const HardwareNetwork& net, const Dataset& train, const TrainOptions& opt) {
  if (!net.formed()) throw StateError("training requires formed banks");
  if (opt.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (opt.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  opt.energy.validate();
  train.validate();
}

}  // namespace

Evaluation evaluate(const HardwareNetwork& net, const Dataset& ds, std::uint64_t noise_seed,
                    const EnergySpec* energy, int workers) {
  Evaluation ev;
  ev.predictions.resize(ds.size());
  ev.probabilities.resize(ds.size());
  std::vector<double> energies(ds.size(), 0.0);
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    Rng noise(derive_seed(noise_seed, i));
    ForwardTrace trace;
    const Tensor logits = net.forward(ds.samples[i], ForwardMode::Analog, &noise,
                                      energy ? &trace : nullptr, nullptr, energy);
    ev.predictions[i] = argmax_of(logits);
    ev.probabilities[i] = probabilities_of(logits).data();
    if (energy) energies[i] = trace.energy_pj;
  });
  std::size_t correct = 0;
  double e_sum = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    correct += ev.predictions[i] == ds.labels[i] ? 1 : 0;
    e_sum += energies[i];
  }
  if (!ds.samples.empty()) {
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    ev.mean_energy_uj = e_sum / static_cast<double>(ds.size()) * 1e-6;
  }
  return ev;
}

std::vector<double> replay_energy(const HardwareNetwork& driver,
                                  const std::vector<const HardwareNetwork*>& nets, const Dataset& ds,
                                  std::uint64_t noise_seed, const EnergySpec& energy, int workers) {
  energy.validate();
  const std::size_t slots = driver.slots().size();
  std::vector<std::vector<std::vector<double>>> row_sums;
  for (const HardwareNetwork* n : nets) {
    if (!n) throw ArgumentError("replay_energy: null network");
    if (n->slots().size() != slots) throw DimensionError("replay_energy: slot count mismatch");
    auto& sums = row_sums.emplace_back();
    for (std::size_t s = 0; s < slots; ++s) {
      const auto& a = n->slots()[s].bank;
      const auto& b = driver.slots()[s].bank;
      if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("replay_energy: bank shape mismatch in " + n->slots()[s].name);
      sums.push_back(row_conductance_sums(a));
    }
  }
  std::vector<std::vector<double>> per(ds.size(), std::vector<double>(nets.size(), 0.0));
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    Rng noise(derive_seed(noise_seed, i));
    ForwardTrace trace;
    trace.keep_drives = true;
    driver.forward(ds.samples[i], ForwardMode::Analog, &noise, &trace);
    for (const Drive& d : trace.drives)
      for (std::size_t k = 0; k < nets.size(); ++k)
        per[i][k] += forward_energy_pj(row_sums[k][d.slot], driver.slots()[d.slot].cols(), d.planes, energy);
  });
  std::vector<double> out(nets.size(), 0.0);
  for (const auto& row : per)
    for (std::size_t k = 0; k < nets.size(); ++k) out[k] += row[k];
  if (!ds.samples.empty())
    for (double& v : out) v = v / static_cast<double>(ds.size()) * 1e-6;
  return out;
}

TrainReport train_topology(HardwareNetwork& net, const Dataset& train, const Dataset& val,
                           const Dataset& test, const TrainOptions& opt) {
  check_ready(net, train, opt);
  if (!(opt.sparsity >= 0.0 && opt.sparsity < 1.0)) throw ConfigError("sparsity must lie in [0,1)");
  TrainReport report;
  report.method = "TO";

  std::vector<ThresholdState> thresholds;
  for (ScoredLayer& s : net.slots()) {
    s.sparsity = opt.sparsity;
    init_scores(s);
    s.mask.assign(s.size(), 1);
    double mean = 0.0, var = 0.0;
    for (double v : s.scores) mean += v;
    mean /= static_cast<double>(s.scores.size());
    for (double v : s.scores) var += (v - mean) * (v - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(s.scores.size()));
    const double t_init = opt.t_init >= 0 ? opt.t_init : 0.1 * std_dev;
    const double t_end = opt.t_end >= 0 ? opt.t_end : t_init / 10.0;
    thresholds.push_back(ThresholdState::make(t_init, t_end, opt.alpha));
  }

  auto reselect = [&] {
    for (std::size_t k = 0; k < net.slots().size(); ++k) {
      ScoredLayer& s = net.slots()[k];
      const auto old_mask = s.mask;
      const auto new_mask = select_subnetwork(s);
      if (new_mask == old_mask) continue;
      report.ledger.add(s.name, sync_mask_to_hardware(s, old_mask, new_mask));
      net.refresh_stored_weights(k);
    }
  };

  {
    EpochRow row0 = eval_row(net, train, val, test, opt, 0, 0.0, 0.0, report.ledger, true);
    row0.threshold = thresholds.empty() ? 0.0 : thresholds.front().current;
    report.rows.push_back(row0);
    if (opt.on_epoch) opt.on_epoch(0, net);
  }
  if (opt.epochs > 0) reselect();

  double best_val = -1.0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    const auto order = shuffled(train.size(), derive_seed(opt.seed, kShuffle + epoch));
    const std::uint64_t noise_root = derive_seed(opt.seed, kTrainNoise + epoch);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t len = std::min<std::size_t>(opt.batch_size, order.size() - start);
      const StepResult step = run_batch(net, train, std::span(order).subspan(start, len), noise_root, opt.workers);
      loss += step.loss;
      correct += step.correct;
      for (std::size_t k = 0; k < net.slots().size(); ++k) {
        ScoredLayer& s = net.slots()[k];
        const auto delta = gate_score_update(score_delta(s, step.grads[k], opt.eta), thresholds[k].current);
        for (std::size_t i = 0; i < delta.size(); ++i) s.scores[i] += delta[i];
      }
      if (opt.per_step_selection) reselect();
    }
    reselect();

    const double n = static_cast<double>(std::max<std::size_t>(train.size(), 1));
    EpochRow row = eval_row(net, train, val, test, opt, epoch, correct / n, loss / n, report.ledger, false);
    const bool new_best = row.val_acc > best_val;
    if (new_best) best_val = row.val_acc;
    for (ThresholdState& th : thresholds) decay_threshold(th, new_best);
    row.threshold = thresholds.empty() ? 0.0 : thresholds.front().current;
    report.rows.push_back(row);
    if (opt.on_epoch) opt.on_epoch(epoch, net);
  }
  return report;
}

TrainReport train_weights_baseline(HardwareNetwork& net, const Dataset& train, const Dataset& val,
                                   const Dataset& test, const TrainOptions& opt) {
  check_ready(net, train, opt);
  if (opt.mode == WoMode::BudgetMatched && opt.budget == 0)
    throw ConfigError("budget-matched weight optimization needs a positive budget");
  TrainReport report;
  report.method = opt.mode == WoMode::Free ? "WO-free" : "WO-budget";
  double t_w = opt.mode == WoMode::Free ? opt.t_w : -1.0;
  for (ScoredLayer& s : net.slots()) {
    s.sparsity = 0.0;
    s.mask.assign(s.size(), 1);
    s.weights = net.stored_weights()[&s - net.slots().data()].data;
  }

  report.rows.push_back(eval_row(net, train, val, test, opt, 0, 0.0, 0.0, report.ledger, true));
  if (opt.on_epoch) opt.on_epoch(0, net);

  const std::size_t steps_per_epoch = (train.size() + opt.batch_size - 1) / opt.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch) * opt.epochs;
  bool budget_spent = false;

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    const auto order = shuffled(train.size(), derive_seed(opt.seed, kShuffle + epoch));
    const std::uint64_t noise_root = derive_seed(opt.seed, kTrainNoise + epoch);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t len = std::min<std::size_t>(opt.batch_size, order.size() - start);
      const StepResult step = run_batch(net, train, std::span(order).subspan(start, len), noise_root, opt.workers);
      loss += step.loss;
      correct += step.correct;

      if (t_w < 0) {
        // Budget calibration on the first step: the threshold that would let
        // an even share of the budget through per step.
        std::vector<double> mags;
        for (const auto& g : step.grads)
          for (double v : g)
            if (v != 0.0) mags.push_back(std::abs(opt.eta_wo * v));
        std::sort(mags.begin(), mags.end(), std::greater<>());
        const double share = static_cast<double>(opt.budget) / std::max(total_steps, 1.0);
        const auto k = static_cast<std::size_t>(std::max(1.0, std::floor(share)));
        t_w = mags.empty() ? 0.0 : mags[std::min(k, mags.size()) - 1];
      }

      for (std::size_t k = 0; k < net.slots().size() && !budget_spent; ++k) {
        ScoredLayer& s = net.slots()[k];
        const Matrix& stored = net.stored_weights()[k];
        LedgerCounts delta;
        bool touched = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
          const double dw = -opt.eta_wo * step.grads[k][i];
          if (dw == 0.0 || !(std::abs(dw) >= t_w)) continue;
          if (opt.mode == WoMode::BudgetMatched &&
              (report.ledger.total().programming_operations() + delta.programming_operations()) >= opt.budget) {
            budget_spent = true;
            break;
          }
          const int r = static_cast<int>(i / s.cols()), c = static_cast<int>(i % s.cols());
          const PairWriteResult pw = program_pair(s.bank, r, c, (stored.data[i] + dw) / s.bank.beta);
          delta.writes += 1;
          delta.write_pulses += static_cast<std::uint64_t>(pw.write_pulses);
          delta.resets += static_cast<std::uint64_t>(pw.resets);
          delta.forms += static_cast<std::uint64_t>(pw.forms);
          touched = true;
        }
        if (touched) {
          report.ledger.add(s.name, delta);
          net.refresh_stored_weights(k);
          s.weights = net.stored_weights()[k].data;
        }
      }
    }
    const double n = static_cast<double>(std::max<std::size_t>(train.size(), 1));
    report.rows.push_back(eval_row(net, train, val, test, opt, epoch, correct / n, loss / n, report.ledger, false));
    if (opt.on_epoch) opt.on_epoch(epoch, net);
  }
  report.t_w = t_w < 0 ? 0.0 : t_w;
  return report;
}

}  // namespace rmtopo
