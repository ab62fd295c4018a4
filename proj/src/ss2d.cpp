// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/ss2d.hpp"

#include <cmath>
#include <string>

#include "serpent/ops.hpp"

namespace serpent {

std::string_view direction_name(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::TopLeftToBottomRight: return "tl_br";
    case ScanDirection::TopRightToBottomLeft: return "tr_bl";
    case ScanDirection::BottomLeftToTopRight: return "bl_tr";
    case ScanDirection::BottomRightToTopLeft: return "br_tl";
  }
  return "?";
}

std::vector<int64_t> unroll_order(int64_t height, int64_t width, ScanDirection dir) {
  if (height < 1 || width < 1) {
    throw DimensionError("unroll: empty grid " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  const bool flip_rows = dir == ScanDirection::BottomLeftToTopRight ||
                         dir == ScanDirection::BottomRightToTopLeft;
  const bool flip_cols = dir == ScanDirection::TopRightToBottomLeft ||
                         dir == ScanDirection::BottomRightToTopLeft;
  std::vector<int64_t> order(static_cast<size_t>(height * width));
  for (int64_t t = 0; t < height * width; ++t) {
    int64_t row = t / width, col = t % width;
    if (flip_rows) row = height - 1 - row;
    if (flip_cols) col = width - 1 - col;
    order[static_cast<size_t>(t)] = row * width + col;
  }
  return order;
}

Tensor unroll(const Tensor& feat, ScanDirection dir) {
  if (feat.rank() != 3) throw DimensionError("unroll: expected HxWxE, got " + shape_str(feat.shape()));
  const int64_t h = feat.dim(0), w = feat.dim(1), e = feat.dim(2);
  auto order = std::make_shared<const std::vector<int64_t>>(unroll_order(h, w, dir));
  return ops::gather_rows(feat, order, e, {h * w, e});
}

Tensor reroll(const Tensor& seq, ScanDirection dir, int64_t height, int64_t width) {
  if (seq.rank() != 2 || seq.dim(0) != height * width) {
    throw DimensionError("reroll: sequence " + shape_str(seq.shape()) + " cannot fill " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const auto order = unroll_order(height, width, dir);
  auto inverse = std::make_shared<std::vector<int64_t>>(order.size());
  for (size_t t = 0; t < order.size(); ++t) (*inverse)[static_cast<size_t>(order[t])] = static_cast<int64_t>(t);
  const int64_t e = seq.dim(1);
  return ops::gather_rows(seq, std::move(inverse), e, {height, width, e});
}

DirectionalSsm DirectionalSsm::create(int64_t channels, int64_t state_dim,
                                      std::mt19937_64& rng) {
  return from_params(ssm::init_selective_params(channels, state_dim, rng, true));
}

DirectionalSsm DirectionalSsm::from_params(const ssm::SelectiveParams& p) {
  p.validate();
  std::vector<float> log_a(p.A.data().size());
  for (size_t i = 0; i < log_a.size(); ++i) {
    const float a = p.A.data()[i];
    if (!(a < 0.0f)) throw std::invalid_argument("DirectionalSsm: A entries must be negative");
    log_a[i] = std::log(-a);
  }
  auto own = [](const Tensor& t) { return Tensor::from_data(t.shape(), {t.data().begin(), t.data().end()}, true); };
  DirectionalSsm d;
  d.A_log = Tensor::from_data(p.A.shape(), std::move(log_a), true);
  d.W_B = own(p.W_B);
  d.bias_B = own(p.bias_B);
  d.W_C = own(p.W_C);
  d.bias_C = own(p.bias_C);
  d.W_delta = own(p.W_delta);
  d.bias_delta = own(p.bias_delta);
  return d;
}

ssm::SelectiveParams DirectionalSsm::params() const {
  return {ops::scale(ops::exp(A_log), -1.0f), W_B, bias_B, W_C, bias_C, W_delta, bias_delta};
}

void DirectionalSsm::parameters(const std::string& prefix, nn::ParamList& out) const {
  out.push_back({prefix + ".A_log", A_log});
  out.push_back({prefix + ".W_B", W_B});
  out.push_back({prefix + ".bias_B", bias_B});
  out.push_back({prefix + ".W_C", W_C});
  out.push_back({prefix + ".bias_C", bias_C});
  out.push_back({prefix + ".W_delta", W_delta});
  out.push_back({prefix + ".bias_delta", bias_delta});
}

Ss2dLayer Ss2dLayer::create(int64_t channels, int64_t state_dim, std::mt19937_64& rng) {
  Ss2dLayer layer;
  for (auto& d : layer.directions) d = DirectionalSsm::create(channels, state_dim, rng);
  return layer;
}

void Ss2dLayer::parameters(const std::string& prefix, nn::ParamList& out) const {
  for (ScanDirection dir : kScanDirections) {
    directions[static_cast<size_t>(dir)].parameters(
        prefix + "." + std::string(direction_name(dir)), out);
  }
}

Tensor ss2d_forward(const Ss2dLayer& layer, const Tensor& feat,
                    std::span<const ScanDirection> compute_order,
                    ssm::ScanStats* stats) {
  if (feat.rank() != 3 || feat.dim(2) != layer.channels()) {
    throw DimensionError("ss2d_forward: features " + shape_str(feat.shape()) +
                         " do not match a layer with " + std::to_string(layer.channels()) +
                         " channels");
  }
  const int64_t h = feat.dim(0), w = feat.dim(1);
  std::array<Tensor, 4> outputs;
  for (ScanDirection dir : compute_order) {
    const auto& weights = layer.directions[static_cast<size_t>(dir)];
    const Tensor seq = unroll(feat, dir);
    const Tensor y = ssm::selective_scan(weights.params(), seq, stats);
    outputs[static_cast<size_t>(dir)] = reroll(y, dir, h, w);
  }
  Tensor total;
  for (ScanDirection dir : kScanDirections) {
    const Tensor& o = outputs[static_cast<size_t>(dir)];
    if (!o.defined()) {
      throw std::invalid_argument("ss2d_forward: compute order must cover all four directions");
    }
    total = total.defined() ? ops::add(total, o) : o;
  }
  return total;
}

VssBlock VssBlock::create(int64_t channels, int64_t state_dim, std::mt19937_64& rng) {
  VssBlock b;
  b.norm_in = nn::LayerNorm::create(channels);
  b.gate = nn::Linear::create(channels, channels, rng);
  b.proj = nn::Linear::create(channels, channels, rng);
  b.dwconv = nn::DepthwiseConv2d::create(channels, kConvKernel, rng);
  b.ss2d = Ss2dLayer::create(channels, state_dim, rng);
  b.skip_gain = Tensor::full({channels}, 1.0f, true);
  b.norm_out = nn::LayerNorm::create(channels);
  b.out_proj = nn::Linear::create(channels, channels, rng, /*zero_init=*/true);
  return b;
}

void VssBlock::parameters(const std::string& prefix, nn::ParamList& out) const {
  norm_in.parameters(prefix + ".norm_in", out);
  gate.parameters(prefix + ".gate", out);
  proj.parameters(prefix + ".proj", out);
  dwconv.parameters(prefix + ".dwconv", out);
  ss2d.parameters(prefix + ".ss2d", out);
  out.push_back({prefix + ".skip_gain", skip_gain});
  norm_out.parameters(prefix + ".norm_out", out);
  out_proj.parameters(prefix + ".out_proj", out);
}

Tensor vss_forward(const VssBlock& block, const Tensor& feat, ssm::ScanStats* stats) {
  if (feat.rank() != 3 || feat.dim(2) != block.channels()) {
    throw DimensionError("vss_forward: features " + shape_str(feat.shape()) +
                         " do not match a block with " + std::to_string(block.channels()) +
                         " channels");
  }
  const Tensor z = block.norm_in(feat);
  const Tensor g = block.gate(z);
  const Tensor a = ops::silu(block.dwconv(block.proj(z)));
  const Tensor s = ops::add(ss2d_forward(block.ss2d, a, kScanDirections, stats),
                            ops::mul(a, block.skip_gain));
  const Tensor h = block.norm_out(s);
  return ops::add(feat, block.out_proj(ops::mul(h, ops::silu(g))));
}

}  // namespace serpent
