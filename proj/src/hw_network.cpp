#include "rmtopo/hw_network.hpp"

#include <algorithm>
#include <cmath>

#include "rmtopo/errors.hpp"
#include "rmtopo/layers.hpp"

namespace rmtopo {

std::size_t ScoredLayer::pruned_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{0}));
}

QuantizationSpec auto_range(std::span<const double> x, int bits, double v_read, int adc_bits) {
  QuantizationSpec q;
  q.bits = bits;
  q.v_read = v_read;
  q.adc_bits = adc_bits;
  double lo = 0.0, hi = 0.0;
  for (double v : x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double levels = std::ldexp(1.0, bits);
  const double span = hi - lo;
  q.lo = lo;
  // Top code (levels-1) lands on the maximum; the half-LSB margin keeps the
  // floor from rounding it down a level.
  q.hi = span > 0 ? lo + span * levels / (levels - 0.5) : lo + 1.0;
  return q;
}

Tensor kernel_from_matrix(const Matrix& w, int out, int in, int kh, int kw) {
  const int k = in * kh * kw;
  if (w.rows != k || w.cols != out) throw DimensionError("kernel_from_matrix: shape mismatch");
  Tensor t({out, in, kh, kw});
  for (int o = 0; o < out; ++o)
    for (int r = 0; r < k; ++r) t[static_cast<std::size_t>(o) * k + r] = w.at(r, o);
  return t;
}

Tensor fc_from_matrix(const Matrix& w) {
  Tensor t({w.cols, w.rows});
  for (int o = 0; o < w.cols; ++o)
    for (int i = 0; i < w.rows; ++i) t[static_cast<std::size_t>(o) * w.rows + i] = w.at(i, o);
  return t;
}

namespace {

// [out, in...] gradient to crossbar layout [in][out].
std::vector<double> transpose_to_crossbar(const Tensor& g) {
  const int out = g.dim(0);
  const std::size_t in = g.size() / static_cast<std::size_t>(out);
  std::vector<double> m(g.size());
  for (int o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) m[i * out + o] = g[static_cast<std::size_t>(o) * in + i];
  return m;
}

}  // namespace

std::vector<double> kernel_grad_to_matrix(const Tensor& dk) { return transpose_to_crossbar(dk); }
std::vector<double> fc_grad_to_matrix(const Tensor& dw) { return transpose_to_crossbar(dw); }

HardwareNetwork::HardwareNetwork(NetworkSpec spec, const DeviceSpec& device, std::uint64_t seed,
                                 const HardwareOptions& options)
    : spec_(std::move(spec)), options_(options) {
  propagate_shapes(spec_);
  if (!(options_.keep_fraction > 0 && options_.keep_fraction <= 1))
    throw ConfigError("keep_fraction must lie in (0,1]");
  if (!(options_.weight_gain > 0)) throw ConfigError("weight_gain must be positive");
  auto add_slot = [&](const std::string& name, int layer, int rows, int cols) {
    const double beta = options_.weight_gain /
                        (device.formed_mean_us * std::sqrt(rows * options_.keep_fraction));
    ScoredLayer s{name, layer,
                  DifferentialPairBank(rows, cols, device,
                                       derive_seed(seed, 100 + slots_.size()), beta),
                  {}, {}, {}, 0.0};
    s.mask.assign(s.size(), 1);
    slots_.push_back(std::move(s));
    return static_cast<int>(slots_.size()) - 1;
  };
  layer_slots_.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const std::string prefix = "L" + std::to_string(i);
    const int li = static_cast<int>(i);
    switch (l.kind) {
      case LayerKind::Conv2d:
        layer_slots_[i].first = add_slot(prefix + ".conv", li, l.dims[1] * l.dims[2] * l.dims[3], l.dims[0]);
        break;
      case LayerKind::FullyConnected:
        layer_slots_[i].first = add_slot(prefix + ".fc", li, l.dims[1], l.dims[0]);
        break;
      case LayerKind::Recurrent:
        layer_slots_[i].first = add_slot(prefix + ".ih", li, l.dims[1], l.dims[0]);
        layer_slots_[i].second = add_slot(prefix + ".hh", li, l.dims[0], l.dims[0]);
        break;
      default:
        break;
    }
  }
  refresh_stored_weights();
}

int HardwareNetwork::classes() const { return output_classes(spec_); }

std::size_t HardwareNetwork::form() {
  if (formed_) throw StateError("network banks are already formed");
  std::size_t formed = 0;
  for (ScoredLayer& s : slots_) {
    formed += s.bank.g_plus.electroform().formed_count;
    formed += form_complementary(s.bank).formed_count;
    s.weights = weights_from_bank(s.bank, false).data;
  }
  formed_ = true;
  refresh_stored_weights();
  return formed;
}

void HardwareNetwork::refresh_stored_weights() {
  stored_.resize(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) refresh_stored_weights(i);
}

void HardwareNetwork::refresh_stored_weights(std::size_t slot) {
  stored_.at(slot) = weights_from_bank(slots_.at(slot).bank, false);
}

std::vector<double> HardwareNetwork::multiply(int slot, std::span<const double> x,
                                              const QuantizationSpec* q, ForwardMode mode,
                                              const BankRead* read, const Matrix* w,
                                              double* energy_pj, const EnergySpec* energy,
                                              const std::vector<double>* row_sums,
                                              std::vector<Drive>* drives) const {
  if (mode == ForwardMode::Digital) return matmul_exact(*w, x);
  const BitPlanes bp = quantize_input(x, *q);
  if (energy && energy_pj) *energy_pj += forward_energy_pj(*row_sums, read->cols, bp, *energy);
  if (drives) drives->push_back({slot, bp});
  const DeviceSpec& d = slots_[slot].bank.g_plus.spec();
  return vmm_planes(*read, bp, q->v_read, q->adc_bits, d.formed_mean_us + 4.0 * d.formed_sigma_us);
}

Tensor HardwareNetwork::forward(const Tensor& sample, ForwardMode mode, Rng* noise,
                                ForwardTrace* trace, const std::vector<Matrix>* weights,
                                const EnergySpec* energy) const {
  if (mode == ForwardMode::Analog && noise == nullptr)
    throw ArgumentError("analog forward needs a noise stream");
  if (weights && weights->size() != slots_.size())
    throw DimensionError("forward: weight override count mismatch");
  const std::vector<Matrix>& w_digital = weights ? *weights : stored_;

  std::vector<int> in_shape = spec_.input_shape;
  if (sample.size() != shape_numel(in_shape))
    throw DimensionError("forward: sample " + sample.shape_str() + " does not match input " +
                         shape_to_string(in_shape));
  in_shape.insert(in_shape.begin(), 1);
  Tensor x = sample.reshaped(in_shape);

  if (trace) {
    const bool keep = trace->keep_drives;
    *trace = ForwardTrace{};
    trace->keep_drives = keep;
    trace->inputs.resize(spec_.layers.size());
    trace->pool_argmax.resize(spec_.layers.size());
    trace->rnn_xs.resize(spec_.layers.size());
    trace->rnn_hs.resize(spec_.layers.size());
  }
  double energy_pj = 0.0;
  bool first_weighted = true;
  std::vector<Drive>* drives =
      trace && trace->keep_drives && mode == ForwardMode::Analog ? &trace->drives : nullptr;

  // Per-slot state for one analog pass: a single noisy read per bank.
  struct SlotRead {
    BankRead read;
    std::vector<double> row_sums;
  };
  auto prepare = [&](int slot) {
    SlotRead sr;
    if (mode == ForwardMode::Analog) {
      sr.read = read_bank(slots_[slot].bank, *noise);
      if (energy) sr.row_sums = row_conductance_sums(slots_[slot].bank);
    }
    return sr;
  };
  auto input_range = [&](std::span<const double> v) {
    if (first_weighted && options_.input_hi > options_.input_lo) {
      QuantizationSpec q;
      q.bits = options_.bits;
      q.lo = options_.input_lo;
      q.hi = options_.input_hi;
      q.v_read = options_.v_read;
      q.adc_bits = options_.adc_bits;
      return q;
    }
    return auto_range(v, options_.bits, options_.v_read, options_.adc_bits);
  };

  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    if (trace) trace->inputs[i] = x;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const int s = layer_slots_[i].first;
        const int out = l.dims[0], in = l.dims[1], kh = l.dims[2], kw = l.dims[3];
        if (mode == ForwardMode::Digital) {
          x = conv2d_forward(x, kernel_from_matrix(w_digital[s], out, in, kh, kw));
        } else {
          const int h = x.dim(2), w = x.dim(3), oh = h - kh + 1, ow = w - kw + 1;
          const SlotRead sr = prepare(s);
          const QuantizationSpec q = input_range(x.span());
          Tensor y({1, out, oh, ow});
          std::vector<double> patch(static_cast<std::size_t>(in) * kh * kw);
          for (int a = 0; a < oh; ++a)
            for (int b = 0; b < ow; ++b) {
              std::size_t r = 0;
              for (int c = 0; c < in; ++c)
                for (int u = 0; u < kh; ++u)
                  for (int v = 0; v < kw; ++v)
                    patch[r++] = x[(static_cast<std::size_t>(c) * h + a + u) * w + b + v];
              const auto col = multiply(s, patch, &q, mode, &sr.read, nullptr, &energy_pj, energy,
                                        &sr.row_sums, drives);
              for (int o = 0; o < out; ++o)
                y[(static_cast<std::size_t>(o) * oh + a) * ow + b] = col[o];
            }
          x = std::move(y);
        }
        first_weighted = false;
        break;
      }
      case LayerKind::FullyConnected: {
        const int s = layer_slots_[i].first;
        const SlotRead sr = prepare(s);
        const QuantizationSpec q =
            mode == ForwardMode::Analog ? input_range(x.span()) : QuantizationSpec{};
        auto y = multiply(s, x.span(), &q, mode, &sr.read, &w_digital[s], &energy_pj, energy,
                          &sr.row_sums, drives);
        x = Tensor({1, l.dims[0]}, std::move(y));
        first_weighted = false;
        break;
      }
      case LayerKind::Recurrent: {
        const int s_ih = layer_slots_[i].first, s_hh = layer_slots_[i].second;
        const int hidden = l.dims[0], in = l.dims[1], steps = l.dims[2];
        const int width = x.dim(3);
        const SlotRead r_ih = prepare(s_ih);
        const SlotRead r_hh = prepare(s_hh);
        QuantizationSpec q_hidden;
        q_hidden.bits = options_.bits;
        q_hidden.lo = -1.0;
        q_hidden.hi = 1.0;
        q_hidden.v_read = options_.v_read;
        q_hidden.adc_bits = options_.adc_bits;

        std::vector<Tensor> xs, hs;
        Tensor h({1, hidden}, 0.0);
        for (int t = 0; t < steps; ++t) {
          Tensor xt({1, in});
          for (int c = 0; c < in; ++c) {
            double acc = 0.0;
            for (int wcol = 0; wcol < width; ++wcol)
              acc += x[(static_cast<std::size_t>(c) * steps + t) * width + wcol];
            xt[c] = acc / width;
          }
          const QuantizationSpec q_in =
              mode == ForwardMode::Analog ? input_range(xt.span()) : QuantizationSpec{};
          auto a = multiply(s_ih, xt.span(), &q_in, mode, &r_ih.read, &w_digital[s_ih],
                            &energy_pj, energy, &r_ih.row_sums, drives);
          if (t > 0) {
            const auto rec = multiply(s_hh, h.span(), &q_hidden, mode, &r_hh.read,
                                      &w_digital[s_hh], &energy_pj, energy, &r_hh.row_sums, drives);
            for (int k = 0; k < hidden; ++k) a[k] += rec[k];
          }
          for (double& v : a) v = std::tanh(v);
          h = Tensor({1, hidden}, std::move(a));
          xs.push_back(std::move(xt));
          hs.push_back(h);
        }
        first_weighted = false;
        x = rnn_average(hs);
        if (trace) {
          trace->rnn_xs[i] = std::move(xs);
          trace->rnn_hs[i] = std::move(hs);
        }
        break;
      }
      case LayerKind::MaxPool2x2: {
        PoolResult p = maxpool2x2_forward(x, !l.dims.empty() && l.dims[0] != 0);
        if (trace) trace->pool_argmax[i] = std::move(p.argmax);
        x = std::move(p.y);
        break;
      }
      case LayerKind::Relu:
        x = relu_forward(x);
        break;
      case LayerKind::Tanh:
        x = tanh_forward(x);
        break;
      case LayerKind::Flatten:
        x = x.reshaped({1, static_cast<int>(x.size())});
        break;
      case LayerKind::SoftmaxXent:
        break;
    }
  }
  if (trace) {
    trace->logits = x;
    trace->energy_pj = energy_pj;
  }
  return x;
}

SlotGrads HardwareNetwork::backward(const ForwardTrace& trace, const Tensor& dlogits,
                                    const std::vector<Matrix>* weights) const {
  const std::vector<Matrix>& w_all = weights ? *weights : stored_;
  SlotGrads grads(slots_.size());
  Tensor g = dlogits;
  for (std::size_t i = spec_.layers.size(); i-- > 0;) {
    const LayerSpec& l = spec_.layers[i];
    const Tensor& in = trace.inputs.at(i);
    switch (l.kind) {
      case LayerKind::SoftmaxXent:
        break;
      case LayerKind::FullyConnected: {
        const int s = layer_slots_[i].first;
        FcGrads fg = fc_backward(in, fc_from_matrix(w_all[s]), g);
        grads[s] = fc_grad_to_matrix(fg.dw);
        g = std::move(fg.dx);
        break;
      }
      case LayerKind::Conv2d: {
        const int s = layer_slots_[i].first;
        ConvGrads cg = conv2d_backward(
            in, kernel_from_matrix(w_all[s], l.dims[0], l.dims[1], l.dims[2], l.dims[3]), g);
        grads[s] = kernel_grad_to_matrix(cg.dk);
        g = std::move(cg.dx);
        break;
      }
      case LayerKind::Recurrent: {
        const int s_ih = layer_slots_[i].first, s_hh = layer_slots_[i].second;
        const auto& xs = trace.rnn_xs.at(i);
        const auto& hs = trace.rnn_hs.at(i);
        const double steps = static_cast<double>(hs.size());
        std::vector<Tensor> dhs(hs.size(), g);
        for (Tensor& d : dhs)
          for (double& v : d.data()) v /= steps;
        RnnSequenceGrads rg =
            rnn_backward(xs, hs, fc_from_matrix(w_all[s_ih]), fc_from_matrix(w_all[s_hh]), dhs);
        grads[s_ih] = fc_grad_to_matrix(rg.dw_ih);
        grads[s_hh] = fc_grad_to_matrix(rg.dw_hh);
        const int channels = in.dim(1), t_steps = in.dim(2), width = in.dim(3);
        Tensor dx(in.shape());
        for (int c = 0; c < channels; ++c)
          for (int t = 0; t < t_steps; ++t)
            for (int wcol = 0; wcol < width; ++wcol)
              dx[(static_cast<std::size_t>(c) * t_steps + t) * width + wcol] = rg.dx[t][c] / width;
        g = std::move(dx);
        break;
      }
      case LayerKind::MaxPool2x2:
        g = maxpool2x2_backward(in.shape(), trace.pool_argmax.at(i), g);
        break;
      case LayerKind::Relu:
        g = relu_backward(in, g);
        break;
      case LayerKind::Tanh:
        g = tanh_backward(tanh_forward(in), g);
        break;
      case LayerKind::Flatten:
        g = g.reshaped(in.shape());
        break;
    }
  }
  return grads;
}

}  // namespace rmtopo
