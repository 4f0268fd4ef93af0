// SPDX-License-Identifier: Apache-2.0
//
// Differentiable layer primitives: dilated 1-D convolution with weight
// normalization, ReLU, inverted dropout, channel concatenation and MSE,
// each with a hand-derived backward pass, plus a central finite-difference
// gradient checker.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "seistcn/tensor.hpp"

namespace seistcn {

enum class Padding {
  kSymmetric,  // dilation*(K-1) zeros split left/right, floor on the left
  kCausal,     // all padding on the left; output t sees inputs <= t
};

// Weight-normalized convolution parameters. The effective kernel is
//   w[c] = g[c] * v[c] / ||v[c]||
// with the norm taken over each output channel's [C_in, K] slice, so the
// direction of v and the magnitude g are learned separately.
struct ConvParams {
  Tensor v;     // [C_out, C_in, K]
  Tensor g;     // [C_out]
  Tensor bias;  // [C_out]
  int dilation = 1;

  std::size_t out_channels() const { return v.extent(0); }
  std::size_t in_channels() const { return v.extent(1); }
  std::size_t kernel() const { return v.extent(2); }

  void validate() const {
    if (v.rank() != 3)
      throw std::invalid_argument("conv: v must be [C_out, C_in, K]");
    if (g.rank() != 1 || g.extent(0) != v.extent(0))
      throw std::invalid_argument("conv: g must be [C_out]");
    if (bias.rank() != 1 || bias.extent(0) != v.extent(0))
      throw std::invalid_argument("conv: bias must be [C_out]");
    if (dilation < 1) throw std::invalid_argument("conv: dilation must be >= 1");
  }
};

// Gradients mirroring ConvParams tensor-for-tensor.
struct ConvGrads {
  Tensor v;
  Tensor g;
  Tensor bias;
};

namespace detail {

inline double channel_norm(const ConvParams& p, std::size_t co) {
  const std::size_t slice = p.in_channels() * p.kernel();
  const double* base = p.v.data() + co * slice;
  double sq = 0.0;
  for (std::size_t i = 0; i < slice; ++i) sq += base[i] * base[i];
  const double n = std::sqrt(sq);
  if (!(n > 0.0))
    throw NumericError("conv: zero-norm direction vector in channel " +
                       std::to_string(co));
  return n;
}

inline std::ptrdiff_t left_pad(const ConvParams& p, Padding mode) {
  const std::ptrdiff_t total =
      static_cast<std::ptrdiff_t>(p.dilation) *
      (static_cast<std::ptrdiff_t>(p.kernel()) - 1);
  return mode == Padding::kCausal ? total : total / 2;
}

}  // namespace detail

inline Tensor effective_weight(const ConvParams& p) {
  p.validate();
  const std::size_t cout = p.out_channels();
  const std::size_t slice = p.in_channels() * p.kernel();
  Tensor w = p.v;
  for (std::size_t co = 0; co < cout; ++co) {
    const double scale = p.g[co] / detail::channel_norm(p, co);
    double* base = w.data() + co * slice;
    for (std::size_t i = 0; i < slice; ++i) base[i] *= scale;
  }
  return w;
}

// Same-length dilated convolution: output [C_out, L] for input [C_in, L]
// under either padding mode.
inline Tensor conv1d_forward(const Tensor& input, const ConvParams& p,
                             Padding mode) {
  p.validate();
  if (input.rank() != 2 || input.extent(0) != p.in_channels())
    throw std::invalid_argument(
        "conv: input channels " +
        std::to_string(input.rank() == 2 ? input.extent(0) : 0) +
        " do not match params (" + std::to_string(p.in_channels()) + ")");
  const std::size_t cin = p.in_channels();
  const std::size_t cout = p.out_channels();
  const std::size_t K = p.kernel();
  const std::ptrdiff_t L = static_cast<std::ptrdiff_t>(input.extent(1));
  const std::ptrdiff_t d = p.dilation;
  const std::ptrdiff_t left = detail::left_pad(p, mode);

  const Tensor w = effective_weight(p);
  Tensor out({cout, static_cast<std::size_t>(L)});
  for (std::size_t co = 0; co < cout; ++co) {
    double* orow = out.data() + co * L;
    const double b = p.bias[co];
    for (std::ptrdiff_t t = 0; t < L; ++t) orow[t] = b;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* irow = input.data() + ci * L;
      const double* wrow = w.data() + (co * cin + ci) * K;
      for (std::size_t k = 0; k < K; ++k) {
        // Padded input index for output t is t + k*d - left; out-of-range
        // taps read zeros, so only the valid window is accumulated.
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) * d - left;
        const double wk = wrow[k];
        const std::ptrdiff_t t_lo = off < 0 ? -off : 0;
        const std::ptrdiff_t t_hi = off > 0 ? L - off : L;
        const double* src = irow + off;
        for (std::ptrdiff_t t = t_lo; t < t_hi; ++t) orow[t] += wk * src[t];
      }
    }
  }
  return out;
}

struct ConvBackward {
  Tensor input_grad;
  ConvGrads grads;
};

// Reverse-mode pass. With y = w (*) x + b and upstream u = dL/dy:
//   dL/db[co]      = sum_t u[co][t]
//   dL/dw[co][ci][k] = sum_t u[co][t] * x[ci][t + k*d - left]
//   dL/dx[ci][s]   = sum_{co,k} w[co][ci][k] * u[co][s - (k*d - left)]
// and through the weight norm w = g * v/|v| (per output channel):
//   dL/dg = (dL/dw . v) / |v|
//   dL/dv = g/|v| * dL/dw - g * (dL/dw . v) / |v|^3 * v
inline ConvBackward conv1d_backward(const Tensor& input, const ConvParams& p,
                                    Padding mode, const Tensor& upstream) {
  p.validate();
  const std::size_t cin = p.in_channels();
  const std::size_t cout = p.out_channels();
  const std::size_t K = p.kernel();
  const std::ptrdiff_t L = static_cast<std::ptrdiff_t>(input.extent(1));
  if (input.rank() != 2 || input.extent(0) != cin)
    throw std::invalid_argument("conv backward: input shape mismatch");
  if (upstream.rank() != 2 || upstream.extent(0) != cout ||
      upstream.extent(1) != static_cast<std::size_t>(L))
    throw std::invalid_argument("conv backward: upstream shape mismatch");
  const std::ptrdiff_t d = p.dilation;
  const std::ptrdiff_t left = detail::left_pad(p, mode);

  const Tensor w = effective_weight(p);
  Tensor dinput({cin, static_cast<std::size_t>(L)});
  Tensor dw({cout, cin, K});
  Tensor dbias({cout});

  for (std::size_t co = 0; co < cout; ++co) {
    const double* urow = upstream.data() + co * L;
    double acc = 0.0;
    for (std::ptrdiff_t t = 0; t < L; ++t) acc += urow[t];
    dbias[co] = acc;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* irow = input.data() + ci * L;
      double* drow = dinput.data() + ci * L;
      const double* wrow = w.data() + (co * cin + ci) * K;
      double* dwrow = dw.data() + (co * cin + ci) * K;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) * d - left;
        const std::ptrdiff_t t_lo = off < 0 ? -off : 0;
        const std::ptrdiff_t t_hi = off > 0 ? L - off : L;
        // dL/dw: correlate upstream with the input window.
        const double* src = irow + off;
        double wacc = 0.0;
        for (std::ptrdiff_t t = t_lo; t < t_hi; ++t) wacc += urow[t] * src[t];
        dwrow[k] = wacc;
        // dL/dx: scatter the same window back with the effective weight.
        const double wk = wrow[k];
        double* dst = drow + off;
        for (std::ptrdiff_t t = t_lo; t < t_hi; ++t) dst[t] += wk * urow[t];
      }
    }
  }

  // Chain rule through the reparameterization, one output channel at a time.
  Tensor dv({cout, cin, K});
  Tensor dg({cout});
  const std::size_t slice = cin * K;
  for (std::size_t co = 0; co < cout; ++co) {
    const double n = detail::channel_norm(p, co);
    const double* vb = p.v.data() + co * slice;
    const double* dwb = dw.data() + co * slice;
    double dot = 0.0;
    for (std::size_t i = 0; i < slice; ++i) dot += dwb[i] * vb[i];
    dg[co] = dot / n;
    const double a = p.g[co] / n;
    const double b = p.g[co] * dot / (n * n * n);
    double* dvb = dv.data() + co * slice;
    for (std::size_t i = 0; i < slice; ++i) dvb[i] = a * dwb[i] - b * vb[i];
  }

  return {std::move(dinput), ConvGrads{std::move(dv), std::move(dg),
                                       std::move(dbias)}};
}

inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  return out;
}

// Subgradient at exactly zero is zero.
inline Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  if (!input.same_shape(upstream))
    throw std::invalid_argument("relu backward: shape mismatch");
  Tensor out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (input[i] <= 0.0) out[i] = 0.0;
  return out;
}

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 0 for dropped elements, 1/(1-p) for kept ones
};

// Inverted dropout: kept activations are scaled at train time so that
// inference is a plain identity. p == 0 consumes no random draws.
inline DropoutResult dropout(const Tensor& input, double p, Rng& rng,
                             bool training) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) {
    Tensor mask = input;
    mask.fill(1.0);
    return {input, std::move(mask)};
  }
  const double scale = 1.0 / (1.0 - p);
  Tensor mask = input;
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < p ? 0.0 : scale;
  Tensor out = input;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return {std::move(out), std::move(mask)};
}

inline Tensor dropout_backward(const Tensor& mask, const Tensor& upstream) {
  if (!mask.same_shape(upstream))
    throw std::invalid_argument("dropout backward: shape mismatch");
  Tensor out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

// Stack b's channels after a's: [C_a, L] + [C_b, L] -> [C_a + C_b, L].
// An empty tensor acts as the zero-channel identity.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1))
    throw std::invalid_argument("concat: length mismatch");
  const std::size_t L = a.extent(1);
  Tensor out({a.extent(0) + b.extent(0), L});
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

inline std::pair<Tensor, Tensor> concat_channels_backward(
    std::size_t c_a, std::size_t c_b, const Tensor& upstream) {
  if (upstream.rank() != 2 || upstream.extent(0) != c_a + c_b)
    throw std::invalid_argument("concat backward: channel mismatch");
  const std::size_t L = upstream.extent(1);
  Tensor da({c_a, L});
  Tensor db({c_b, L});
  std::copy(upstream.data(), upstream.data() + da.size(), da.data());
  std::copy(upstream.data() + da.size(), upstream.data() + upstream.size(),
            db.data());
  return {std::move(da), std::move(db)};
}

struct MseResult {
  double loss;
  Tensor pred_grad;
};

// Mean over all elements of (pred - target)^2; grad is 2*(pred-target)/n.
inline MseResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("mse: shape mismatch");
  const std::size_t n = pred.size();
  Tensor grad = pred;
  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pred[i] - target[i];
    acc += diff * diff;
    grad[i] = 2.0 * diff * inv_n;
  }
  return {acc * inv_n, std::move(grad)};
}

// Central finite-difference check of an analytic gradient. `f` must be a
// deterministic scalar function of the parameter vector (dropout frozen);
// determinism is verified by evaluating twice. Returns
//   max_i |analytic_i - fd_i| / max(|analytic_i|, |fd_i|, 1e-8).
inline double grad_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> theta,
                         std::span<const double> analytic_grad,
                         double eps = 1e-5) {
  if (theta.size() != analytic_grad.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
  std::vector<double> work(theta.begin(), theta.end());
  const double f0 = f(work);
  const double f1 = f(work);
  if (f0 != f1)
    throw std::logic_error("grad_check: function is not deterministic");
  double max_rel = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double saved = work[i];
    work[i] = saved + eps;
    const double fp = f(work);
    work[i] = saved - eps;
    const double fm = f(work);
    work[i] = saved;
    const double fd = (fp - fm) / (2.0 * eps);
    const double a = analytic_grad[i];
    const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-8});
    max_rel = std::max(max_rel, std::fabs(a - fd) / denom);
  }
  return max_rel;
}

}  // namespace seistcn
