// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "serpent/ops.hpp"

namespace serpent::ssm {

namespace {

struct Zoh {
  float a_bar;
  float coef;  // B̄ / B
};

// Shared by the LTI and selective paths so both see identical Ā and B̄.
inline Zoh zoh(float a, float delta) {
  const double z = static_cast<double>(delta) * static_cast<double>(a);
  const double em1 = std::expm1(z);
  const double coef = std::fabs(z) < kZohLimitThreshold
                          ? static_cast<double>(delta)
                          : em1 / static_cast<double>(a);
  return {static_cast<float>(1.0 + em1), static_cast<float>(coef)};
}

// d(coef)/dA = Δ² φ(z), φ(z) = (z e^z - e^z + 1) / z².
inline double zoh_coef_dA(double delta, double z, double a_bar) {
  double phi;
  if (std::fabs(z) < 0.1) {
    phi = 0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z * (1.0 / 30.0 +
                                                        z * (1.0 / 144.0 + z / 840.0))));
  } else {
    phi = (z * a_bar - (a_bar - 1.0)) / (z * z);
  }
  return delta * delta * phi;
}

void require_nonempty(std::span<const float> u) {
  if (u.empty()) throw DimensionError("scan of an empty sequence");
}

}  // namespace

void LtiSystem::validate() const {
  if (B.size() != A.size() || C.size() != A.size()) {
    throw DimensionError("LtiSystem: A, B, C lengths " + std::to_string(A.size()) +
                         ", " + std::to_string(B.size()) + ", " +
                         std::to_string(C.size()));
  }
  if (!(delta > 0.0f)) throw std::invalid_argument("LtiSystem: delta must be positive");
  for (float a : A) {
    if (!(a < 0.0f)) throw std::invalid_argument("LtiSystem: A entries must be negative");
  }
}

ZohResult discretize_zoh(std::span<const float> A, std::span<const float> B,
                         float delta) {
  if (!(delta > 0.0f)) {
    throw std::invalid_argument("discretize_zoh: delta must be positive, got " +
                                std::to_string(delta));
  }
  if (A.size() != B.size()) {
    throw DimensionError("discretize_zoh: A has " + std::to_string(A.size()) +
                         " entries, B has " + std::to_string(B.size()));
  }
  ZohResult r;
  r.A_bar.resize(A.size());
  r.B_bar.resize(A.size());
  for (size_t i = 0; i < A.size(); ++i) {
    const Zoh z = zoh(A[i], delta);
    r.A_bar[i] = z.a_bar;
    r.B_bar[i] = static_cast<float>(static_cast<double>(z.coef) * B[i]);
  }
  return r;
}

DiscreteSystem discretize(const LtiSystem& sys) {
  sys.validate();
  ZohResult z = discretize_zoh(sys.A, sys.B, sys.delta);
  return {std::move(z.A_bar), std::move(z.B_bar), sys.C};
}

std::vector<float> lti_scan_recurrent(const DiscreteSystem& sys,
                                      std::span<const float> u) {
  require_nonempty(u);
  const size_t n = sys.A_bar.size();
  std::vector<double> x(n, 0.0);
  std::vector<float> y(u.size());
  for (size_t k = 0; k < u.size(); ++k) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      x[i] = sys.A_bar[i] * x[i] + static_cast<double>(sys.B_bar[i]) * u[k];
      acc += sys.C[i] * x[i];
    }
    y[k] = static_cast<float>(acc);
  }
  return y;
}

SsmKernel lti_kernel(const DiscreteSystem& sys, int64_t length) {
  if (length < 1) throw std::invalid_argument("lti_kernel: length must be >= 1");
  const size_t n = sys.A_bar.size();
  std::vector<double> power(n, 1.0);
  SsmKernel k;
  k.taps.resize(static_cast<size_t>(length));
  for (int64_t j = 0; j < length; ++j) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      acc += static_cast<double>(sys.C[i]) * power[i] * sys.B_bar[i];
      power[i] *= sys.A_bar[i];
    }
    k.taps[static_cast<size_t>(j)] = static_cast<float>(acc);
  }
  return k;
}

std::vector<float> lti_scan_convolutional(const DiscreteSystem& sys,
                                          std::span<const float> u) {
  require_nonempty(u);
  const int64_t len = static_cast<int64_t>(u.size());
  // Taps are kept in double here; lti_kernel rounds them for export.
  const size_t n = sys.A_bar.size();
  std::vector<double> taps(static_cast<size_t>(len), 0.0);
  std::vector<double> power(n, 1.0);
  for (int64_t j = 0; j < len; ++j) {
    for (size_t i = 0; i < n; ++i) {
      taps[j] += static_cast<double>(sys.C[i]) * power[i] * sys.B_bar[i];
      power[i] *= sys.A_bar[i];
    }
  }
  std::vector<float> y(u.size());
  for (int64_t k = 0; k < len; ++k) {
    double acc = 0.0;
    for (int64_t j = 0; j <= k; ++j) acc += taps[j] * u[k - j];
    y[k] = static_cast<float>(acc);
  }
  return y;
}

ScanMode ScanMode::chunked(int64_t chunk_len) {
  if (chunk_len < 1) throw std::invalid_argument("chunk_len must be >= 1");
  return {Kind::Chunked, chunk_len};
}

std::vector<float> lti_scan(const DiscreteSystem& sys, std::span<const float> u,
                            ScanMode mode) {
  switch (mode.kind) {
    case ScanMode::Kind::Recurrent:
      return lti_scan_recurrent(sys, u);
    case ScanMode::Kind::Convolutional:
      return lti_scan_convolutional(sys, u);
    case ScanMode::Kind::Chunked: {
      require_nonempty(u);
      const size_t n = sys.A_bar.size();
      std::vector<double> x(n, 0.0);
      std::vector<double> bu(n * static_cast<size_t>(mode.chunk_len));
      std::vector<float> y(u.size());
      for (size_t k0 = 0; k0 < u.size(); k0 += static_cast<size_t>(mode.chunk_len)) {
        const size_t k1 = std::min(u.size(), k0 + static_cast<size_t>(mode.chunk_len));
        for (size_t k = k0; k < k1; ++k)
          for (size_t i = 0; i < n; ++i)
            bu[(k - k0) * n + i] = static_cast<double>(sys.B_bar[i]) * u[k];
        for (size_t k = k0; k < k1; ++k) {
          double acc = 0.0;
          for (size_t i = 0; i < n; ++i) {
            x[i] = sys.A_bar[i] * x[i] + bu[(k - k0) * n + i];
            acc += sys.C[i] * x[i];
          }
          y[k] = static_cast<float>(acc);
        }
      }
      return y;
    }
  }
  return {};
}

void SelectiveParams::validate() const {
  if (!A.defined() || A.rank() != 2) throw DimensionError("SelectiveParams: A must be [E, N]");
  const int64_t e = A.dim(0), n = A.dim(1);
  if (n < 1 || e < 1) throw DimensionError("SelectiveParams: empty state or channels");
  auto expect = [](const Tensor& t, const Shape& s, const char* name) {
    if (!t.defined() || t.shape() != s) {
      throw DimensionError(std::string("SelectiveParams: ") + name + " must be " +
                           shape_str(s) +
                           (t.defined() ? ", got " + shape_str(t.shape()) : std::string()));
    }
  };
  expect(W_B, {e, n}, "W_B");
  expect(bias_B, {n}, "bias_B");
  expect(W_C, {e, n}, "W_C");
  expect(bias_C, {n}, "bias_C");
  expect(W_delta, {e, e}, "W_delta");
  expect(bias_delta, {e}, "bias_delta");
}

SelectiveParams init_selective_params(int64_t channels, int64_t state_dim,
                                      std::mt19937_64& rng, bool requires_grad) {
  if (channels < 1 || state_dim < 1) {
    throw std::invalid_argument("init_selective_params: channels and state_dim must be >= 1");
  }
  const int64_t e = channels, n = state_dim;
  const float bound = 1.0f / std::sqrt(static_cast<float>(e));
  std::uniform_real_distribution<float> proj(-bound, bound);
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));

  auto uniform = [&](Shape s) {
    std::vector<float> v(static_cast<size_t>(shape_numel(s)));
    for (float& x : v) x = proj(rng);
    return Tensor::from_data(std::move(s), std::move(v), requires_grad);
  };

  SelectiveParams p;
  std::vector<float> a(static_cast<size_t>(e * n));
  for (int64_t d = 0; d < e; ++d)
    for (int64_t i = 0; i < n; ++i) a[d * n + i] = -static_cast<float>(i + 1);
  p.A = Tensor::from_data({e, n}, std::move(a), requires_grad);
  p.W_B = uniform({e, n});
  p.bias_B = Tensor::zeros({n}, requires_grad);
  p.W_C = uniform({e, n});
  p.bias_C = Tensor::zeros({n}, requires_grad);
  p.W_delta = uniform({e, e});
  std::vector<float> bias(static_cast<size_t>(e));
  for (float& b : bias) {
    const double dt = std::exp(log_dt(rng));
    b = static_cast<float>(dt + std::log(-std::expm1(-dt)));  // softplus⁻¹(dt)
  }
  p.bias_delta = Tensor::from_data({e}, std::move(bias), requires_grad);
  return p;
}

namespace {

struct ScanDims {
  int64_t len, channels, state;
};

// Per (step, channel, state) values needed by the backward pass.
struct ScanTape {
  std::vector<float> a_bar, coef, state;
};

void scan_forward(const ScanDims& dims, const float* u, const float* delta,
                  const float* A, const float* B, const float* C,
                  int64_t chunk_len, float* y, ScanTape* tape, ScanStats* stats) {
  const int64_t L = dims.len, E = dims.channels, N = dims.state;
  std::vector<double> x(static_cast<size_t>(E * N), 0.0);
  if (tape) {
    const size_t total = static_cast<size_t>(L * E * N);
    tape->a_bar.resize(total);
    tape->coef.resize(total);
    tape->state.resize(total);
  }
  if (chunk_len <= 0) {
    for (int64_t k = 0; k < L; ++k) {
      for (int64_t d = 0; d < E; ++d) {
        const float uk = u[k * E + d];
        const float dt = delta[k * E + d];
        double acc = 0.0;
        for (int64_t n = 0; n < N; ++n) {
          const Zoh z = zoh(A[d * N + n], dt);
          const double bu = static_cast<double>(z.coef * B[k * N + n]) * uk;
          double& xs = x[d * N + n];
          xs = z.a_bar * xs + bu;
          acc += C[k * N + n] * xs;
          if (tape) {
            const size_t t = static_cast<size_t>((k * E + d) * N + n);
            tape->a_bar[t] = z.a_bar;
            tape->coef[t] = z.coef;
            tape->state[t] = static_cast<float>(xs);
          }
        }
        y[k * E + d] = static_cast<float>(acc);
      }
    }
    if (stats) {
      stats->peak_buffer = std::max<uint64_t>(stats->peak_buffer, static_cast<uint64_t>(E * N));
    }
  } else {
    const int64_t block = std::min(chunk_len, L);
    std::vector<float> a_buf(static_cast<size_t>(block * E * N));
    std::vector<double> bu_buf(a_buf.size());
    for (int64_t k0 = 0; k0 < L; k0 += block) {
      const int64_t k1 = std::min(L, k0 + block);
      for (int64_t k = k0; k < k1; ++k) {
        for (int64_t d = 0; d < E; ++d) {
          const float uk = u[k * E + d];
          const float dt = delta[k * E + d];
          for (int64_t n = 0; n < N; ++n) {
            const Zoh z = zoh(A[d * N + n], dt);
            const size_t b = static_cast<size_t>(((k - k0) * E + d) * N + n);
            a_buf[b] = z.a_bar;
            bu_buf[b] = static_cast<double>(z.coef * B[k * N + n]) * uk;
            if (tape) {
              const size_t t = static_cast<size_t>((k * E + d) * N + n);
              tape->a_bar[t] = z.a_bar;
              tape->coef[t] = z.coef;
            }
          }
        }
      }
      for (int64_t k = k0; k < k1; ++k) {
        for (int64_t d = 0; d < E; ++d) {
          double acc = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            const size_t b = static_cast<size_t>(((k - k0) * E + d) * N + n);
            double& xs = x[d * N + n];
            xs = a_buf[b] * xs + bu_buf[b];
            acc += C[k * N + n] * xs;
            if (tape) tape->state[static_cast<size_t>((k * E + d) * N + n)] = static_cast<float>(xs);
          }
          y[k * E + d] = static_cast<float>(acc);
        }
      }
    }
    if (stats) {
      stats->peak_buffer = std::max<uint64_t>(
          stats->peak_buffer, static_cast<uint64_t>(E * N + 3 * block * E * N));
    }
  }
  if (stats) {
    const auto work = static_cast<uint64_t>(L * E * N);
    stats->discretizations += work;
    stats->state_updates += work;
    stats->output_terms += work;
  }
}

}  // namespace

Tensor selective_scan_core(const Tensor& u, const Tensor& delta, const Tensor& A,
                           const Tensor& B, const Tensor& C, int64_t chunk_len,
                           ScanStats* stats) {
  if (u.rank() != 2 || A.rank() != 2) {
    throw DimensionError("selective_scan_core: u must be [L, E] and A [E, N], got " +
                         shape_str(u.shape()) + " and " + shape_str(A.shape()));
  }
  const ScanDims dims{u.dim(0), u.dim(1), A.dim(1)};
  if (dims.len < 1) throw DimensionError("selective_scan_core: empty sequence");
  if (A.dim(0) != dims.channels || delta.shape() != u.shape() ||
      B.shape() != Shape{dims.len, dims.state} || C.shape() != B.shape()) {
    throw DimensionError("selective_scan_core: inconsistent shapes u " +
                         shape_str(u.shape()) + ", delta " + shape_str(delta.shape()) +
                         ", A " + shape_str(A.shape()) + ", B " + shape_str(B.shape()) +
                         ", C " + shape_str(C.shape()));
  }
  const bool record = grad_enabled() && (u.requires_grad() || delta.requires_grad() ||
                                         A.requires_grad() || B.requires_grad() ||
                                         C.requires_grad());
  auto tape = record ? std::make_shared<ScanTape>() : nullptr;
  std::vector<float> y(static_cast<size_t>(dims.len * dims.channels));
  scan_forward(dims, u.data().data(), delta.data().data(), A.data().data(),
               B.data().data(), C.data().data(), chunk_len, y.data(), tape.get(), stats);

  return detail::make_result(
      u.shape(), std::move(y), {u, delta, A, B, C},
      [dims, tape](const detail::TensorImpl& o,
                   const std::vector<std::shared_ptr<detail::TensorImpl>>& in) {
        const int64_t L = dims.len, E = dims.channels, N = dims.state;
        const auto& uv = in[0]->data;
        const auto& dv = in[1]->data;
        const auto& av = in[2]->data;
        const auto& bv = in[3]->data;
        const auto& cv = in[4]->data;
        float* gu = in[0]->requires_grad ? in[0]->grad_buffer().data() : nullptr;
        float* gdt = in[1]->requires_grad ? in[1]->grad_buffer().data() : nullptr;
        float* gA = in[2]->requires_grad ? in[2]->grad_buffer().data() : nullptr;
        float* gB = in[3]->requires_grad ? in[3]->grad_buffer().data() : nullptr;
        float* gC = in[4]->requires_grad ? in[4]->grad_buffer().data() : nullptr;
        std::vector<double> carry(static_cast<size_t>(E * N), 0.0);
        std::vector<double> gA_acc(gA ? static_cast<size_t>(E * N) : 0, 0.0);
        for (int64_t k = L - 1; k >= 0; --k) {
          for (int64_t d = 0; d < E; ++d) {
            const double g = o.grad[k * E + d];
            const double uk = uv[k * E + d];
            const double dt = dv[k * E + d];
            double gdt_acc = 0.0, gu_acc = 0.0;
            for (int64_t n = 0; n < N; ++n) {
              const size_t t = static_cast<size_t>((k * E + d) * N + n);
              const double a = tape->a_bar[t];
              const double coef = tape->coef[t];
              const double xprev = k > 0 ? tape->state[t - static_cast<size_t>(E * N)] : 0.0;
              const double bk = bv[k * N + n];
              const double ad = av[d * N + n];
              const double z = dt * ad;
              const bool limit = std::fabs(z) < kZohLimitThreshold;
              const double h = carry[d * N + n] + g * cv[k * N + n];
              if (gC) gC[k * N + n] += static_cast<float>(g * tape->state[t]);
              const double hx = h * xprev;
              const double hu = h * uk;
              const double dcoef_ddt = limit ? 1.0 : a;
              gdt_acc += hx * ad * a + hu * bk * dcoef_ddt;
              if (gA) gA_acc[d * N + n] += hx * dt * a + hu * bk * zoh_coef_dA(dt, z, a);
              if (gB) gB[k * N + n] += static_cast<float>(hu * coef);
              gu_acc += h * coef * bk;
              carry[d * N + n] = a * h;
            }
            if (gdt) gdt[k * E + d] += static_cast<float>(gdt_acc);
            if (gu) gu[k * E + d] += static_cast<float>(gu_acc);
          }
        }
        if (gA) {
          for (size_t i = 0; i < gA_acc.size(); ++i) gA[i] += static_cast<float>(gA_acc[i]);
        }
      });
}

namespace {

Tensor run_selective(const SelectiveParams& p, const Tensor& U, int64_t chunk_len,
                     ScanStats* stats) {
  p.validate();
  if (U.rank() != 2 || U.dim(1) != p.channels()) {
    throw DimensionError("selective_scan: input " + shape_str(U.shape()) +
                         " does not match " + std::to_string(p.channels()) + " channels");
  }
  if (U.dim(0) < 1) throw DimensionError("selective_scan: empty sequence");
  const Tensor delta = ops::softplus(ops::linear(U, p.W_delta, p.bias_delta));
  const Tensor B = ops::linear(U, p.W_B, p.bias_B);
  const Tensor C = ops::linear(U, p.W_C, p.bias_C);
  return selective_scan_core(U, delta, p.A, B, C, chunk_len, stats);
}

}  // namespace

Tensor selective_scan(const SelectiveParams& p, const Tensor& U, ScanStats* stats) {
  return run_selective(p, U, 0, stats);
}

Tensor selective_scan_chunked(const SelectiveParams& p, const Tensor& U,
                              int64_t chunk_len, ScanStats* stats) {
  if (chunk_len < 1) throw std::invalid_argument("selective_scan_chunked: chunk_len must be >= 1");
  return run_selective(p, U, chunk_len, stats);
}

Tensor selective_scan(const SelectiveParams& p, const Tensor& U, ScanMode mode,
                      ScanStats* stats) {
  switch (mode.kind) {
    case ScanMode::Kind::Recurrent:
      return selective_scan(p, U, stats);
    case ScanMode::Kind::Chunked:
      return selective_scan_chunked(p, U, mode.chunk_len, stats);
    case ScanMode::Kind::Convolutional:
      break;
  }
  throw std::invalid_argument(
      "convolutional mode requires a time-invariant system; selective scans are time-varying");
}

}  // namespace serpent::ssm
