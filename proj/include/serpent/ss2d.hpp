// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Four-directional selective scan over feature maps and the VSS block.

#pragma once

#include <array>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "serpent/nn.hpp"
#include "serpent/ssm.hpp"
#include "serpent/tensor.hpp"

namespace serpent {

/// Row-major raster starting at the named corner. Rows and columns are
/// walked away from that corner.
enum class ScanDirection {
  TopLeftToBottomRight = 0,
  TopRightToBottomLeft = 1,
  BottomLeftToTopRight = 2,
  BottomRightToTopLeft = 3,
};

inline constexpr std::array<ScanDirection, 4> kScanDirections = {
    ScanDirection::TopLeftToBottomRight, ScanDirection::TopRightToBottomLeft,
    ScanDirection::BottomLeftToTopRight, ScanDirection::BottomRightToTopLeft};

std::string_view direction_name(ScanDirection dir);

/// order[t] = flat pixel index (row * W + col) visited at sequence step t.
std::vector<int64_t> unroll_order(int64_t height, int64_t width, ScanDirection dir);

/// feat [H, W, E] -> seq [H*W, E]
Tensor unroll(const Tensor& feat, ScanDirection dir);
/// seq [H*W, E] -> feat [H, W, E]; inverse of unroll for the same direction.
Tensor reroll(const Tensor& seq, ScanDirection dir, int64_t height, int64_t width);

/// Selective SSM weights for one direction. A = -exp(A_log) keeps the
/// learned dynamics stable.
struct DirectionalSsm {
  Tensor A_log;  // [E, N]
  Tensor W_B, bias_B, W_C, bias_C, W_delta, bias_delta;

  static DirectionalSsm create(int64_t channels, int64_t state_dim, std::mt19937_64& rng);
  /// Adopts explicit parameters; `p.A` must be strictly negative.
  static DirectionalSsm from_params(const ssm::SelectiveParams& p);
  ssm::SelectiveParams params() const;
  void parameters(const std::string& prefix, nn::ParamList& out) const;
};

struct Ss2dLayer {
  std::array<DirectionalSsm, 4> directions;  // indexed by ScanDirection

  static Ss2dLayer create(int64_t channels, int64_t state_dim, std::mt19937_64& rng);
  int64_t channels() const { return directions[0].A_log.dim(0); }
  int64_t state_dim() const { return directions[0].A_log.dim(1); }
  void parameters(const std::string& prefix, nn::ParamList& out) const;
};

/// Sum over the four directions of reroll(selective_scan(unroll(feat))).
/// `compute_order` only changes the order the scans are evaluated; the
/// reduction always follows kScanDirections.
Tensor ss2d_forward(const Ss2dLayer& layer, const Tensor& feat,
                    std::span<const ScanDirection> compute_order = kScanDirections,
                    ssm::ScanStats* stats = nullptr);

/// Gated two-branch block:
///   z = norm_in(x)
///   g = gate(z)
///   a = silu(dwconv(proj(z)))
///   h = norm_out(ss2d(a) + skip_gain ⊙ a)
///   out = x + out_proj(h ⊙ silu(g))
struct VssBlock {
  nn::LayerNorm norm_in;
  nn::Linear gate;
  nn::Linear proj;
  nn::DepthwiseConv2d dwconv;
  Ss2dLayer ss2d;
  Tensor skip_gain;  // [E]
  nn::LayerNorm norm_out;
  nn::Linear out_proj;  // zero at init, so the block starts as identity

  static constexpr int64_t kConvKernel = 3;

  static VssBlock create(int64_t channels, int64_t state_dim, std::mt19937_64& rng);
  int64_t channels() const { return gate.in_features(); }
  void parameters(const std::string& prefix, nn::ParamList& out) const;
};

Tensor vss_forward(const VssBlock& block, const Tensor& feat,
                   ssm::ScanStats* stats = nullptr);

}  // namespace serpent
