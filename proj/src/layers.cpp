#include "rmtopo/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rmtopo/errors.hpp"

namespace rmtopo {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + t.shape_str());
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& k) {
  require_rank(x, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != c)
    throw DimensionError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                         " channels, input has " + std::to_string(c));
  if (h < kh || w < kw) throw DimensionError("conv2d: input smaller than kernel");
  const int oh = h - kh + 1, ow = w - kw + 1;
  Tensor y({n, o, oh, ow});
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  double* yd = y.data().data();
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v)
                acc += xd[((static_cast<std::size_t>(b) * c + ic) * h + i + u) * w + j + v] *
                       kd[((static_cast<std::size_t>(oc) * c + ic) * kh + u) * kw + v];
          yd[((static_cast<std::size_t>(b) * o + oc) * oh + i) * ow + j] = acc;
        }
  return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& dy) {
  require_rank(x, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  require_rank(dy, 4, "conv2d dy");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != c) throw DimensionError("conv2d_backward: channel mismatch");
  const int oh = h - kh + 1, ow = w - kw + 1;
  if (dy.shape() != std::vector<int>{n, o, oh, ow})
    throw DimensionError("conv2d_backward: dy shape " + dy.shape_str() +
                         " does not match forward output");
  ConvGrads g{Tensor(x.shape()), Tensor(k.shape())};
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  const double* dyd = dy.data().data();
  double* dxd = g.dx.data().data();
  double* dkd = g.dk.data().data();
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const double gy = dyd[((static_cast<std::size_t>(b) * o + oc) * oh + i) * ow + j];
          if (gy == 0.0) continue;
          for (int ic = 0; ic < c; ++ic)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const std::size_t xi = ((static_cast<std::size_t>(b) * c + ic) * h + i + u) * w + j + v;
                const std::size_t ki = ((static_cast<std::size_t>(oc) * c + ic) * kh + u) * kw + v;
                dxd[xi] += gy * kd[ki];
                dkd[ki] += gy * xd[xi];
              }
        }
  return g;
}

PoolResult maxpool2x2_forward(const Tensor& x, bool floor_mode) {
  require_rank(x, 4, "maxpool input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (!floor_mode && (h % 2 != 0 || w % 2 != 0))
    throw DimensionError("maxpool2x2: odd spatial dims " + x.shape_str());
  if (h < 2 || w < 2) throw DimensionError("maxpool2x2: spatial dims below 2 " + x.shape_str());
  const int oh = h / 2, ow = w / 2;
  PoolResult r{Tensor({n, c, oh, ow}), {}};
  r.argmax.resize(r.y.size());
  std::size_t out = 0;
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j, ++out) {
          std::size_t best = 0;
          double best_v = -std::numeric_limits<double>::infinity();
          for (int u = 0; u < 2; ++u)
            for (int v = 0; v < 2; ++v) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(b) * c + ch) * h + 2 * i + u) * w + 2 * j + v;
              if (x[idx] > best_v) {
                best_v = x[idx];
                best = idx;
              }
            }
          r.y[out] = best_v;
          r.argmax[out] = best;
        }
  return r;
}

Tensor maxpool2x2_backward(const std::vector<int>& x_shape, const std::vector<std::size_t>& argmax,
                           const Tensor& dy) {
  if (argmax.size() != dy.size()) throw DimensionError("maxpool2x2_backward: argmax/dy size mismatch");
  Tensor dx(x_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (argmax[i] >= dx.size()) throw DimensionError("maxpool2x2_backward: argmax out of range");
    dx[argmax[i]] += dy[i];
  }
  return dx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same(x, dy, "relu_backward");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

Tensor tanh_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = std::tanh(v);
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& dy) {
  require_same(y, dy, "tanh_backward");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - y[i] * y[i];
  return dx;
}

Tensor fc_forward(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "fc input");
  require_rank(w, 2, "fc weight");
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in)
    throw DimensionError("fc: weight " + w.shape_str() + " does not accept input " + x.shape_str());
  Tensor y({n, out});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out; ++o) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i)
        acc += w[static_cast<std::size_t>(o) * in + i] * x[static_cast<std::size_t>(b) * in + i];
      y[static_cast<std::size_t>(b) * out + o] = acc;
    }
  return y;
}

FcGrads fc_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  require_rank(x, 2, "fc input");
  require_rank(w, 2, "fc weight");
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in || dy.shape() != std::vector<int>{n, out})
    throw DimensionError("fc_backward: shape mismatch");
  FcGrads g{Tensor(x.shape()), Tensor(w.shape())};
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out; ++o) {
      const double gy = dy[static_cast<std::size_t>(b) * out + o];
      if (gy == 0.0) continue;
      for (int i = 0; i < in; ++i) {
        g.dx[static_cast<std::size_t>(b) * in + i] += gy * w[static_cast<std::size_t>(o) * in + i];
        g.dw[static_cast<std::size_t>(o) * in + i] += gy * x[static_cast<std::size_t>(b) * in + i];
      }
    }
  return g;
}

Tensor rnn_step(const Tensor& x_t, const Tensor& h_prev, const Tensor& w_ih, const Tensor& w_hh) {
  require_rank(w_hh, 2, "rnn w_hh");
  if (w_hh.dim(0) != w_hh.dim(1) || w_ih.rank() != 2 || w_ih.dim(0) != w_hh.dim(0))
    throw DimensionError("rnn_step: inconsistent weight shapes " + w_ih.shape_str() + ", " +
                         w_hh.shape_str());
  Tensor a = fc_forward(x_t, w_ih);
  const Tensor r = fc_forward(h_prev, w_hh);
  if (a.shape() != r.shape()) throw DimensionError("rnn_step: batch mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += r[i];
  return tanh_forward(a);
}

std::vector<Tensor> rnn_forward(const std::vector<Tensor>& xs, const Tensor& w_ih,
                                const Tensor& w_hh) {
  if (xs.empty()) throw ArgumentError("rnn_forward: empty sequence");
  std::vector<Tensor> hs;
  hs.reserve(xs.size());
  Tensor h({xs.front().dim(0), w_hh.dim(0)}, 0.0);
  for (const Tensor& x : xs) {
    h = rnn_step(x, h, w_ih, w_hh);
    hs.push_back(h);
  }
  return hs;
}

RnnSequenceGrads rnn_backward(const std::vector<Tensor>& xs, const std::vector<Tensor>& hs,
                              const Tensor& w_ih, const Tensor& w_hh,
                              const std::vector<Tensor>& dhs) {
  if (xs.empty() || xs.size() != hs.size() || hs.size() != dhs.size())
    throw DimensionError("rnn_backward: sequence length mismatch");
  const std::size_t steps = xs.size();
  RnnSequenceGrads g{std::vector<Tensor>(steps), Tensor(w_ih.shape()), Tensor(w_hh.shape())};
  Tensor carry(hs.front().shape(), 0.0);
  for (std::size_t s = steps; s-- > 0;) {
    Tensor dh = dhs[s];
    require_same(dh, carry, "rnn_backward dh");
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += carry[i];
    const Tensor da = tanh_backward(hs[s], dh);
    FcGrads gi = fc_backward(xs[s], w_ih, da);
    g.dx[s] = std::move(gi.dx);
    for (std::size_t i = 0; i < g.dw_ih.size(); ++i) g.dw_ih[i] += gi.dw[i];
    const Tensor h_prev = s > 0 ? hs[s - 1] : Tensor(hs.front().shape(), 0.0);
    FcGrads gh = fc_backward(h_prev, w_hh, da);
    for (std::size_t i = 0; i < g.dw_hh.size(); ++i) g.dw_hh[i] += gh.dw[i];
    carry = std::move(gh.dx);
  }
  return g;
}

Tensor rnn_average(const std::vector<Tensor>& hs) {
  if (hs.empty()) throw ArgumentError("rnn_average: empty sequence");
  Tensor out(hs.front().shape(), 0.0);
  for (const Tensor& h : hs) {
    require_same(h, out, "rnn_average");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[i];
  }
  const double t = static_cast<double>(hs.size());
  for (double& v : out.data()) v /= t;
  return out;
}

XentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "softmax_xent logits");
  const int n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(n))
    throw DimensionError("softmax_xent: label count does not match batch");
  XentResult r{0.0, Tensor(logits.shape())};
  for (int b = 0; b < n; ++b) {
    const int label = labels[b];
    if (label < 0 || label >= classes)
      throw ArgumentError("softmax_xent: label " + std::to_string(label) + " outside [0," +
                          std::to_string(classes) + ")");
    const double* z = logits.data().data() + static_cast<std::size_t>(b) * classes;
    double* dz = &r.dlogits[static_cast<std::size_t>(b) * classes];
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    r.loss += lse - z[label];
    for (int c = 0; c < classes; ++c) dz[c] = std::exp(z[c] - lse) - (c == label ? 1.0 : 0.0);
  }
  return r;
}

}  // namespace rmtopo
