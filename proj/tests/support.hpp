// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test suites: random fixtures and a central
// finite-difference gradient oracle that only ever calls forward code.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "serpent/nn.hpp"
#include "serpent/ops.hpp"
#include "serpent/tensor.hpp"

namespace serpent::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f,
                            float hi = 1.0f, bool requires_grad = false) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
  for (float& x : v) x = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<float> random_vector(size_t n, std::mt19937_64& rng, float lo = -1.0f,
                                        float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

/// ||a - b||_inf / max(||b||_inf, tiny)
inline double rel_linf(std::span<const float> a, std::span<const float> b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::fabs(static_cast<double>(a[i]) - b[i]));
    den = std::max(den, std::fabs(static_cast<double>(b[i])));
  }
  return num / std::max(den, 1e-30);
}

inline bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

/// Adds uniform noise of the given amplitude to every parameter in place.
inline void jitter(const nn::ParamList& params, std::mt19937_64& rng, float amplitude) {
  std::uniform_real_distribution<float> dist(-amplitude, amplitude);
  for (auto p : params) {
    for (float& v : p.tensor.mutable_data()) v += dist(rng);
  }
}

/// Standard deviation of the rounding noise in f along a line, from the
/// high-order finite-difference table of 9 closely spaced samples
/// (Moré and Wild's ECnoise estimate at order 6).
inline double estimate_noise(const std::function<double(double)>& f, double spacing) {
  constexpr int kSamples = 9, kOrder = 6;
  std::vector<double> d(kSamples);
  for (int k = 0; k < kSamples; ++k) d[k] = f((k - kSamples / 2) * spacing);
  for (int order = 1; order <= kOrder; ++order) {
    for (int k = 0; k + order < kSamples; ++k) d[k] = d[k + 1] - d[k];
  }
  const int m = kSamples - kOrder;
  double mean_sq = 0.0;
  for (int k = 0; k < m; ++k) mean_sq += d[k] * d[k];
  mean_sq /= m;
  // gamma_k = (k!)^2 / (2k)!
  double gamma = 1.0;
  for (int k = 1; k <= kOrder; ++k) gamma *= static_cast<double>(k) / (kOrder + k);
  return std::sqrt(gamma * mean_sq);
}

/// Ridders' polynomial extrapolation of central differences to zero step.
/// Each tableau entry is scored by the larger of its truncation estimate and
/// the function noise propagated through the extrapolation weights (higher
/// orders amplify noise); the best-scored entry wins and its score is
/// returned as the estimate's uncertainty.
struct NumericDerivative {
  double value = 0.0;
  double uncertainty = 0.0;
};

inline NumericDerivative ridders(const std::function<double(double)>& f, double h0, double noise) {
  constexpr int kTab = 12;
  constexpr double kShrink = 1.6, kShrink2 = kShrink * kShrink;
  double table[kTab][kTab];
  double amp[kTab][kTab];  // bound on |d entry / d sample| summed over samples, times h
  auto quotient = [&](double h) { return (f(h) - f(-h)) / (2.0 * h); };
  double best = 0.0, best_err = std::numeric_limits<double>::infinity();
  double h = h0;
  table[0][0] = quotient(h);
  amp[0][0] = 1.0 / h;
  best = table[0][0];
  for (int i = 1; i < kTab; ++i) {
    h /= kShrink;
    table[0][i] = quotient(h);
    amp[0][i] = 1.0 / h;
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
      amp[j][i] = (amp[j - 1][i] * fac + amp[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double err = std::max({std::fabs(table[j][i] - table[j - 1][i]),
                                   std::fabs(table[j][i] - table[j - 1][i - 1]),
                                   2.0 * noise * amp[j][i]});
      if (err <= best_err) {
        best_err = err;
        best = table[j][i];
      }
    }
  }
  return {best, best_err};
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;
  int probes = 0;
  double max_uncertainty_ratio = 0.0;  // largest uncertainty / |numeric| seen
  int resolved = 0;  // probes whose uncertainty is below 1e-3 of |numeric|
};

/// Compares analytic gradients with central differences along one direction
/// per tensor: the analytic gradient plus a random orthogonal component, so
/// every probe has a directional derivative of order |grad| and a wrong
/// gradient direction still shows up.
/// The numeric side is Ridders' extrapolation starting at step
/// eps * max(rms(tensor), 0.1). Relative error is the discrepancy in excess
/// of the numeric estimate's own uncertainty,
/// max(0, |analytic - numeric| - uncertainty) / max(|analytic|, |numeric|, floor),
/// so probes whose derivative sits below f32 resolution of the loss are not
/// misreported while resolvable probes keep the full tolerance.
inline GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                       const nn::ParamList& params, std::mt19937_64& rng,
                                       double eps = 1.0, double floor = 1e-6) {
  for (auto p : params) p.tensor.zero_grad();
  backward(loss_fn());
  GradCheckResult result;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto p : params) {
    const size_t n = static_cast<size_t>(p.tensor.numel());
    std::vector<double> g(n, 0.0);
    if (p.tensor.has_grad()) {
      for (size_t i = 0; i < n; ++i) g[i] = p.tensor.grad()[i];
    }
    double gnorm = 0.0;
    for (double v : g) gnorm += v * v;
    gnorm = std::sqrt(gnorm);
    // dir = normalize(ĝ + 0.5 r̂), r̂ a random unit vector orthogonal to g.
    std::vector<double> dir(n);
    for (double& v : dir) v = normal(rng);
    if (gnorm > 0.0) {
      double proj = 0.0;
      for (size_t i = 0; i < n; ++i) proj += dir[i] * g[i] / gnorm;
      for (size_t i = 0; i < n; ++i) dir[i] -= proj * g[i] / gnorm;
    }
    double rnorm = 0.0;
    for (double v : dir) rnorm += v * v;
    rnorm = std::sqrt(rnorm);
    double dnorm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double r = rnorm > 0.0 ? dir[i] / rnorm : 0.0;
      dir[i] = gnorm > 0.0 ? g[i] / gnorm + 0.5 * r : r;
      dnorm += dir[i] * dir[i];
    }
    dnorm = std::sqrt(dnorm);
    for (double& v : dir) v /= dnorm;

    double analytic = 0.0;
    for (size_t i = 0; i < n; ++i) analytic += g[i] * dir[i];

    auto values = p.tensor.mutable_data();
    const std::vector<float> saved(values.begin(), values.end());
    double rms = 0.0;
    for (float v : saved) rms += static_cast<double>(v) * v;
    rms = std::sqrt(rms / static_cast<double>(std::max<size_t>(n, 1)));
    const double h0 = eps * std::max(rms, 0.1);
    auto eval_at = [&](double step) {
      for (size_t i = 0; i < n; ++i) values[i] = static_cast<float>(saved[i] + step * dir[i]);
      NoGradGuard guard;
      return static_cast<double>(loss_fn().item());
    };
    // A single noise estimate rests on three sixth differences and can land
    // low by a factor of a few; the largest of three spacings is conservative.
    double noise = 0.0;
    for (double spacing : {1e-2, 3e-3, 1e-3}) noise = std::max(noise, estimate_noise(eval_at, h0 * spacing));
    const NumericDerivative nd = ridders(eval_at, h0, noise);
    const double numeric = nd.value;
    std::copy(saved.begin(), saved.end(), values.begin());

    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    const double excess = std::max(0.0, std::fabs(analytic - numeric) - nd.uncertainty);
    const double err = excess / denom;
    ++result.probes;
    if (nd.uncertainty < 1e-3 * std::fabs(numeric)) ++result.resolved;
    result.max_uncertainty_ratio =
        std::max(result.max_uncertainty_ratio, nd.uncertainty / std::max(std::fabs(numeric), floor));
    if (err > result.max_rel_err) {
      result.max_rel_err = err;
      result.worst = p.name + " (analytic " + std::to_string(analytic) + ", numeric " +
                     std::to_string(numeric) + ")";
    }
  }
  return result;
}

/// sum(out ⊙ weights): a scalar loss with no symmetric cancellations.
inline Tensor weighted_sum(const Tensor& out, const Tensor& weights) {
  return ops::sum(ops::mul(out, weights));
}

}  // namespace serpent::testing
