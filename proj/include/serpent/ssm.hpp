// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Diagonal state space models.
//
// Continuous system:  x'(t) = A x(t) + B u(t),  y(t) = C x(t)
// Discrete (ZOH):     x_k = Ā ⊙ x_{k-1} + B̄ u_k,  y_k = C · x_k,  x_0 = 0
// with Ā = exp(ΔA) and B̄ = (exp(ΔA) - 1) / A · B.
//
// The selective variant makes B, C and Δ functions of the input sequence,
// which turns the system time-varying and rules out the convolutional form.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "serpent/tensor.hpp"

namespace serpent::ssm {

/// Below this |Δ·A| the ZOH input coefficient uses its first-order limit Δ.
inline constexpr double kZohLimitThreshold = 1e-6;

struct LtiSystem {
  std::vector<float> A;  // diagonal, strictly negative
  std::vector<float> B;
  std::vector<float> C;
  float delta = 0.0f;
  std::optional<float> D;  // feedthrough; unused by the scans

  int64_t state_dim() const { return static_cast<int64_t>(A.size()); }
  void validate() const;
};

struct DiscreteSystem {
  std::vector<float> A_bar;
  std::vector<float> B_bar;
  std::vector<float> C;

  int64_t state_dim() const { return static_cast<int64_t>(A_bar.size()); }
};

struct ZohResult {
  std::vector<float> A_bar;
  std::vector<float> B_bar;
};

/// K[j] = Σ_i C_i Ā_i^j B̄_i, one tap per input position.
struct SsmKernel {
  std::vector<float> taps;
};

ZohResult discretize_zoh(std::span<const float> A, std::span<const float> B,
                         float delta);
DiscreteSystem discretize(const LtiSystem& sys);

std::vector<float> lti_scan_recurrent(const DiscreteSystem& sys,
                                      std::span<const float> u);
SsmKernel lti_kernel(const DiscreteSystem& sys, int64_t length);
std::vector<float> lti_scan_convolutional(const DiscreteSystem& sys,
                                          std::span<const float> u);

struct ScanMode {
  enum class Kind { Recurrent, Convolutional, Chunked };
  Kind kind = Kind::Recurrent;
  int64_t chunk_len = 0;

  static ScanMode recurrent() { return {Kind::Recurrent, 0}; }
  static ScanMode convolutional() { return {Kind::Convolutional, 0}; }
  static ScanMode chunked(int64_t chunk_len);
};

std::vector<float> lti_scan(const DiscreteSystem& sys, std::span<const float> u,
                            ScanMode mode);

/// Work counters filled by the scans when requested.
struct ScanStats {
  uint64_t discretizations = 0;  // (step, channel, state) ZOH evaluations
  uint64_t state_updates = 0;    // x = Ā x + B̄ u multiply-adds
  uint64_t output_terms = 0;     // C · x multiply-adds
  uint64_t peak_buffer = 0;      // largest scratch allocation, in floats

  uint64_t total() const { return discretizations + state_updates + output_terms; }
};

/// Input-dependent parameters of E independent channel SSMs sharing the
/// selection projections:
///   Δ_k = softplus(U_k · W_delta + bias_delta)   [E]
///   B_k = U_k · W_B + bias_B                     [N]
///   C_k = U_k · W_C + bias_C                     [N]
/// With zero weights the biases give a constant (LTI) system per channel.
struct SelectiveParams {
  Tensor A;           // [E, N]
  Tensor W_B;         // [E, N]
  Tensor bias_B;      // [N]
  Tensor W_C;         // [E, N]
  Tensor bias_C;      // [N]
  Tensor W_delta;     // [E, E]
  Tensor bias_delta;  // [E]

  int64_t channels() const { return A.dim(0); }
  int64_t state_dim() const { return A.dim(1); }
  void validate() const;
};

/// A_{d,i} = -(i+1); projections uniform in ±1/sqrt(E); B and C biases zero;
/// Δ biases chosen so softplus(bias) is log-uniform in [1e-3, 1e-1].
SelectiveParams init_selective_params(int64_t channels, int64_t state_dim,
                                      std::mt19937_64& rng,
                                      bool requires_grad = false);

/// Differentiable selective scan of U [L, E] -> Y [L, E].
Tensor selective_scan(const SelectiveParams& p, const Tensor& U,
                      ScanStats* stats = nullptr);

/// Same recurrence evaluated chunk by chunk: discretisation for a whole chunk
/// first, then the recurrence with the hidden state carried across chunks.
Tensor selective_scan_chunked(const SelectiveParams& p, const Tensor& U,
                              int64_t chunk_len, ScanStats* stats = nullptr);

/// Convolutional mode is rejected: a selective system is not time-invariant.
Tensor selective_scan(const SelectiveParams& p, const Tensor& U, ScanMode mode,
                      ScanStats* stats = nullptr);

/// Fused time-varying recurrence given already projected inputs.
///   u, delta: [L, E]   A: [E, N]   B, C: [L, N]
/// chunk_len <= 0 runs the plain step-by-step recurrence.
Tensor selective_scan_core(const Tensor& u, const Tensor& delta,
                           const Tensor& A, const Tensor& B, const Tensor& C,
                           int64_t chunk_len = 0, ScanStats* stats = nullptr);

}  // namespace serpent::ssm
