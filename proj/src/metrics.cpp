#include "rmtopo/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "rmtopo/errors.hpp"

namespace rmtopo {

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size())
    throw DimensionError("confusion: prediction length " + std::to_string(pred.size()) +
                         " vs truth length " + std::to_string(truth.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

Ratio safe_div(double num, double den) {
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}

}  // namespace

Ratio tpr_recall(const ConfusionCounts& c) {
  return safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
}

Ratio fpr(const ConfusionCounts& c) {
  return safe_div(static_cast<double>(c.fp), static_cast<double>(c.tn + c.fp));
}

Ratio precision(const ConfusionCounts& c) {
  return safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
}

Ratio f1(const ConfusionCounts& c) {
  const Ratio p = precision(c), r = tpr_recall(c);
  Ratio out = safe_div(2.0 * p.value * r.value, p.value + r.value);
  out.degenerate = out.degenerate || p.degenerate || r.degenerate;
  return out;
}

Ratio accuracy(const ConfusionCounts& c) {
  return safe_div(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
}

std::vector<std::vector<std::uint64_t>> confusion_matrix(std::span<const int> pred,
                                                         std::span<const int> truth, int classes) {
  if (pred.size() != truth.size()) throw DimensionError("confusion_matrix: length mismatch");
  if (classes < 1) throw ArgumentError("confusion_matrix: classes must be >= 1");
  std::vector<std::vector<std::uint64_t>> m(classes, std::vector<std::uint64_t>(classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= classes || truth[i] < 0 || truth[i] >= classes)
      throw ArgumentError("confusion_matrix: label outside [0," + std::to_string(classes) + ")");
    ++m[truth[i]][pred[i]];
  }
  return m;
}

Curves roc_pr_curves(std::span<const double> probabilities, std::span<const std::uint8_t> truth) {
  if (probabilities.empty()) throw ArgumentError("roc_pr_curves: empty input");
  if (probabilities.size() != truth.size()) throw DimensionError("roc_pr_curves: length mismatch");
  for (double p : probabilities)
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("roc_pr_curves: probabilities must lie in [0,1]");

  std::vector<std::size_t> order(probabilities.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probabilities[a] > probabilities[b];
  });
  const double positives = static_cast<double>(std::count_if(
      truth.begin(), truth.end(), [](std::uint8_t t) { return t != 0; }));
  const double negatives = static_cast<double>(truth.size()) - positives;

  Curves cv;
  cv.roc.push_back({1.0 + 1e-12, 0.0, 0.0});
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = probabilities[order[i]];
    while (i < order.size() && probabilities[order[i]] == thr) {
      (truth[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    const double tpr = positives > 0 ? tp / positives : 0.0;
    const double fpr_v = negatives > 0 ? fp / negatives : 0.0;
    const double prec = tp / (tp + fp);
    if (cv.pr.empty()) cv.pr.push_back({thr, 0.0, prec});
    cv.roc.push_back({thr, fpr_v, tpr});
    cv.pr.push_back({thr, tpr, prec});
  }
  auto trapezoid = [](const std::vector<CurvePoint>& pts) {
    double area = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k)
      area += (pts[k].x - pts[k - 1].x) * (pts[k].y + pts[k - 1].y) / 2.0;
    return area;
  };
  cv.auc_roc = trapezoid(cv.roc);
  cv.auc_pr = trapezoid(cv.pr);
  return cv;
}

void EnergySpec::validate() const {
  for (double v : {v_read, t_read_ns, e_reset_pj, e_set_pj, e_write_pulse_pj, e_form_pj,
                   digital_overhead_pj_per_mac})
    if (!(v >= 0.0)) throw ConfigError("energy constants must be non-negative");
}

std::vector<double> row_conductance_sums(const DifferentialPairBank& bank) {
  std::vector<double> sums(static_cast<std::size_t>(bank.rows()), 0.0);
  const auto& gp = bank.g_plus.conductances();
  const auto& gm = bank.g_minus.conductances();
  const auto cols = static_cast<std::size_t>(bank.cols());
  for (std::size_t r = 0; r < sums.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) sums[r] += gp[r * cols + c] + gm[r * cols + c];
  return sums;
}

double forward_energy_pj(std::span<const double> row_sums, int cols, const BitPlanes& bp,
                         const EnergySpec& spec) {
  if (row_sums.size() != bp.length) throw DimensionError("forward_energy: row count mismatch");
  // G[uS] * V^2 * t[ns] = 1e-6 * 1e-9 J = 1e-3 pJ.
  const double scale = spec.v_read * spec.v_read * spec.t_read_ns * 1e-3;
  double conductance_sum = 0.0;
  std::uint64_t active = 0;
  for (int k = 0; k < bp.bits; ++k)
    for (std::size_t r = 0; r < bp.length; ++r)
      if (bp.planes[k][r]) {
        conductance_sum += row_sums[r];
        ++active;
      }
  if (bp.lo != 0.0) {
    for (double s : row_sums) conductance_sum += s;
    active += bp.length;
  }
  return conductance_sum * scale +
         static_cast<double>(active) * cols * spec.digital_overhead_pj_per_mac;
}

double forward_energy(const DifferentialPairBank& bank, const BitPlanes& bp, const EnergySpec& spec) {
  const auto sums = row_conductance_sums(bank);
  return forward_energy_pj(sums, bank.cols(), bp, spec) * 1e-6;
}

LedgerCounts& LedgerCounts::operator+=(const LedgerCounts& o) {
  resets += o.resets;
  sets += o.sets;
  forms += o.forms;
  writes += o.writes;
  write_pulses += o.write_pulses;
  return *this;
}

void ProgrammingLedger::add(const std::string& layer, const LedgerCounts& delta) {
  layers_[layer] += delta;
}

LedgerCounts ProgrammingLedger::total() const {
  LedgerCounts t;
  for (const auto& [name, c] : layers_) t += c;
  return t;
}

double programming_energy(const LedgerCounts& c, const EnergySpec& spec) {
  const double pj = static_cast<double>(c.resets) * spec.e_reset_pj +
                    static_cast<double>(c.sets) * spec.e_set_pj +
                    static_cast<double>(c.forms) * spec.e_form_pj +
                    static_cast<double>(c.write_pulses) * spec.e_write_pulse_pj;
  return pj * 1e-6;
}

double programming_energy(const ProgrammingLedger& ledger, const EnergySpec& spec) {
  return programming_energy(ledger.total(), spec);
}

Histogram histogram(std::span<const double> values, int bins, double lo, double hi) {
  if (bins < 1) throw ArgumentError("histogram: bins must be >= 1");
  if (!(hi > lo)) throw ArgumentError("histogram: empty range");
  Histogram h{lo, hi, std::vector<std::uint64_t>(static_cast<std::size_t>(bins), 0)};
  const double w = h.width();
  for (double v : values) {
    if (!(v >= lo && v <= hi)) continue;
    auto b = static_cast<std::size_t>((v - lo) / w);
    h.counts[std::min(b, h.counts.size() - 1)] += 1;
  }
  return h;
}

std::vector<Mode> find_modes(const Histogram& h, double min_fraction) {
  const std::size_t n = h.counts.size();
  std::vector<std::uint64_t> s(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    s[i] = h.counts[i] + (i > 0 ? h.counts[i - 1] : 0) + (i + 1 < n ? h.counts[i + 1] : 0);
  const std::uint64_t top = n ? *std::max_element(s.begin(), s.end()) : 0;
  if (top == 0) return {};
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < n; ++i) {
    const bool rising = i == 0 || s[i] > s[i - 1];
    const bool falling = i + 1 == n || s[i] >= s[i + 1];
    if (rising && falling && static_cast<double>(s[i]) >= min_fraction * static_cast<double>(top))
      peaks.push_back(i);
  }
  std::vector<std::size_t> kept;
  for (std::size_t p : peaks) {
    if (!kept.empty()) {
      const std::size_t q = kept.back();
      const std::uint64_t valley = *std::min_element(s.begin() + q, s.begin() + p + 1);
      if (static_cast<double>(valley) >= 0.5 * static_cast<double>(std::min(s[p], s[q]))) {
        if (s[p] > s[q]) kept.back() = p;
        continue;
      }
    }
    kept.push_back(p);
  }
  std::vector<Mode> modes;
  for (std::size_t p : kept) {
    double wsum = 0.0, csum = 0.0;
    for (std::size_t i = p > 0 ? p - 1 : 0; i <= std::min(p + 1, n - 1); ++i) {
      wsum += static_cast<double>(h.counts[i]) * h.center(i);
      csum += static_cast<double>(h.counts[i]);
    }
    modes.push_back({csum > 0 ? wsum / csum : h.center(p), s[p]});
  }
  return modes;
}

}  // namespace rmtopo
