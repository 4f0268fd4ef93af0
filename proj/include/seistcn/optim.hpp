// SPDX-License-Identifier: Apache-2.0
//
// Adam with bias correction and L2-coupled weight decay (the decay term
// joins the gradient before the moment updates). Beta/epsilon are the
// standard defaults; the state owns one first/second moment entry per
// parameter.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "seistcn/errors.hpp"

namespace seistcn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::vector<double>& params,
                      const std::vector<double>& grads, AdamState& state,
                      const AdamConfig& cfg) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n)
    throw std::invalid_argument("adam: parameter/gradient/state size mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(grads[i]))
      throw NumericError("adam: non-finite gradient at index " +
                         std::to_string(i));

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i] + cfg.weight_decay * params[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace seistcn
