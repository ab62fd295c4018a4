// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical U-shaped restoration network built from VSS blocks.
//
//   img ─ patchify ─ [block ─ merge]×(S-1) ─ block ─ [expand ─ fuse(skip) ─ block]×(S-1) ─ head ─(+img)
//
// Channels at scale s are D·2^s; spatial extent at scale s is (H/P)/2^s.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "serpent/nn.hpp"
#include "serpent/ss2d.hpp"
#include "serpent/tensor.hpp"

namespace serpent {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class SerpentVariant { B, L, H };

/// Patch size of a named variant: B=4, L=2, H=1.
int64_t variant_patch_size(SerpentVariant v);
std::string variant_name(SerpentVariant v);

struct SerpentConfig {
  int64_t patch_size = 2;
  int64_t embed_dim = 32;
  int64_t depth = 2;       // VSS blocks per Serpent block
  int64_t num_scales = 4;  // down/up stages + 1 bottleneck
  double state_ratio = 1.0 / 6.0;
  int64_t in_channels = 3;
  bool global_residual = true;  // output = head(...) + input

  void validate() const;
  int64_t channels_at(int64_t scale) const { return embed_dim << scale; }
  /// SSM state dimension at `channels`: nearest integer to c·ratio, at least 1.
  int64_t state_dim(int64_t channels) const;
  /// Input height/width must be a multiple of this.
  int64_t size_multiple() const { return patch_size << (num_scales - 1); }
  void check_input(int64_t height, int64_t width) const;

  static SerpentConfig variant(SerpentVariant v, int64_t embed_dim = 32);
};

// H×W×C -> (H/f)×(W/f)×(f·f·C). Channel group q = di·f + dj holds pixel (di, dj).
Tensor space_to_depth(const Tensor& x, int64_t factor);
// Inverse of space_to_depth.
Tensor depth_to_space(const Tensor& x, int64_t factor);

struct PatchEmbed {
  int64_t patch_size = 1;
  nn::Linear embed;  // P·P·C -> D

  Tensor operator()(const Tensor& img) const;
  void parameters(const std::string& prefix, nn::ParamList& out) const;
};

/// Splits img into P×P patches and embeds each into D channels.
Tensor patchify(const Tensor& img, const PatchEmbed& embed);

struct PatchMerge {
  nn::Linear reduce;  // 4c -> 2c
  void parameters(const std::string& prefix, nn::ParamList& out) const;
};
/// h×w×c -> (h/2)×(w/2)×2c
Tensor patch_merge(const PatchMerge& merge, const Tensor& x);

struct PatchExpand {
  nn::Linear expand;  // c -> 2c
  void parameters(const std::string& prefix, nn::ParamList& out) const;
};
/// h×w×c -> (2h)×(2w)×(c/2)
Tensor patch_expand(const PatchExpand& expand, const Tensor& x);

struct SerpentBlock {
  std::vector<VssBlock> blocks;
  void parameters(const std::string& prefix, nn::ParamList& out) const;
};
Tensor serpent_block(const SerpentBlock& block, const Tensor& x,
                     ssm::ScanStats* stats = nullptr);

struct ForwardOptions {
  bool zero_skips = false;  // replace skip tensors by zeros (wiring probe)
  ssm::ScanStats* stats = nullptr;
};

class SerpentModel {
 public:
  /// Fresh model. The head and every VSS out-projection start at zero so
  /// the network is the identity map until trained.
  static SerpentModel create(const SerpentConfig& config, uint64_t seed);

  Tensor forward(const Tensor& img, const ForwardOptions& options = {}) const;

  const SerpentConfig& config() const { return config_; }
  nn::ParamList parameters() const;

  PatchEmbed embed;
  std::vector<SerpentBlock> encoder;  // scales 0..S-2
  std::vector<PatchMerge> merges;     // scale s -> s+1
  SerpentBlock bottleneck;            // scale S-1
  std::vector<PatchExpand> expands;   // index s: scale s+1 -> s
  std::vector<nn::Linear> fuses;      // index s: concat(up, skip) 2c -> c
  std::vector<SerpentBlock> decoder;  // index s: scale s
  nn::Linear head;                    // D -> P·P·C

 private:
  SerpentConfig config_;
};

Tensor serpent_forward(const SerpentModel& model, const Tensor& img,
                       const ForwardOptions& options = {});

struct ParamReport {
  int64_t total = 0;
  int64_t backbone = 0;  // everything except patch embedding and head
  std::map<std::string, int64_t> per_module;
};

ParamReport count_params(const SerpentModel& model);

/// Analytic operation counts; one multiply-accumulate counts as one FLOP.
struct FlopsReport {
  uint64_t linear = 0;       // embed, gate/proj/out, merge, expand, fuse, head
  uint64_t dwconv = 0;
  uint64_t ssm = 0;          // SS2D path: selection projections + scan steps
  uint64_t norm = 0;
  uint64_t elementwise = 0;
  uint64_t tokens = 0;       // tokens at the finest scale
  // Global self-attention in place of every SS2D layer: 4·T²·c + 4·T·c².
  uint64_t attention_reference = 0;

  uint64_t total() const { return linear + dwconv + ssm + norm + elementwise; }
  /// Same network with attention instead of SS2D.
  uint64_t reference_total() const { return total() - ssm + attention_reference; }
  double attention_ratio() const {
    return static_cast<double>(reference_total()) / static_cast<double>(total());
  }
};

inline constexpr uint64_t kScanOpsPerState = 3;  // discretise, update, readout
inline constexpr uint64_t kNormOpsPerElement = 4;

/// Cost of the scan core alone for a sequence (ssm path minus projections).
uint64_t scan_flops(uint64_t tokens, uint64_t channels, uint64_t state_dim);
/// 4·T²·c + 4·T·c²
uint64_t attention_flops(uint64_t tokens, uint64_t channels);

FlopsReport count_flops(const SerpentConfig& config, int64_t height, int64_t width);
FlopsReport count_flops(const SerpentModel& model, int64_t height, int64_t width);

}  // namespace serpent
