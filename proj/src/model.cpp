// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/model.hpp"

#include <cmath>
#include <memory>

#include "serpent/ops.hpp"

namespace serpent {

int64_t variant_patch_size(SerpentVariant v) {
  switch (v) {
    case SerpentVariant::B: return 4;
    case SerpentVariant::L: return 2;
    case SerpentVariant::H: return 1;
  }
  return 1;
}

std::string variant_name(SerpentVariant v) {
  switch (v) {
    case SerpentVariant::B: return "Serpent-B";
    case SerpentVariant::L: return "Serpent-L";
    case SerpentVariant::H: return "Serpent-H";
  }
  return "Serpent-?";
}

void SerpentConfig::validate() const {
  if (patch_size != 1 && patch_size != 2 && patch_size != 4) {
    throw ConfigError("patch_size must be 1, 2 or 4, got " + std::to_string(patch_size));
  }
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (depth < 0) throw ConfigError("depth must be >= 0");
  if (num_scales < 1 || num_scales > 8) throw ConfigError("num_scales must be in [1, 8]");
  if (!(state_ratio > 0.0)) throw ConfigError("state_ratio must be positive");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
}

int64_t SerpentConfig::state_dim(int64_t channels) const {
  return std::max<int64_t>(1, std::llround(static_cast<double>(channels) * state_ratio));
}

void SerpentConfig::check_input(int64_t height, int64_t width) const {
  const int64_t m = size_multiple();
  if (height < 1 || width < 1 || height % m != 0 || width % m != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by P*2^(scales-1) = " + std::to_string(m) +
                      " (P=" + std::to_string(patch_size) + ")");
  }
}

SerpentConfig SerpentConfig::variant(SerpentVariant v, int64_t embed_dim) {
  SerpentConfig c;
  c.patch_size = variant_patch_size(v);
  c.embed_dim = embed_dim;
  return c;
}

Tensor space_to_depth(const Tensor& x, int64_t factor) {
  if (x.rank() != 3) throw DimensionError("space_to_depth: expected HxWxC, got " + shape_str(x.shape()));
  const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (factor < 1 || h % factor != 0 || w % factor != 0) {
    throw DimensionError("space_to_depth: " + shape_str(x.shape()) +
                         " not divisible by " + std::to_string(factor));
  }
  const int64_t ho = h / factor, wo = w / factor, f2 = factor * factor;
  auto index = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < ho; ++i)
    for (int64_t j = 0; j < wo; ++j)
      for (int64_t di = 0; di < factor; ++di)
        for (int64_t dj = 0; dj < factor; ++dj)
          (*index)[static_cast<size_t>((i * wo + j) * f2 + di * factor + dj)] =
              (i * factor + di) * w + (j * factor + dj);
  return ops::gather_rows(x, std::move(index), c, {ho, wo, f2 * c});
}

Tensor depth_to_space(const Tensor& x, int64_t factor) {
  if (x.rank() != 3) throw DimensionError("depth_to_space: expected HxWxC, got " + shape_str(x.shape()));
  const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2), f2 = factor * factor;
  if (factor < 1 || c % f2 != 0) {
    throw DimensionError("depth_to_space: " + std::to_string(c) +
                         " channels not divisible by " + std::to_string(f2));
  }
  const int64_t co = c / f2, ho = h * factor, wo = w * factor;
  auto index = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(ho * wo));
  for (int64_t i = 0; i < ho; ++i)
    for (int64_t j = 0; j < wo; ++j)
      (*index)[static_cast<size_t>(i * wo + j)] =
          ((i / factor) * w + j / factor) * f2 + (i % factor) * factor + (j % factor);
  return ops::gather_rows(x, std::move(index), co, {ho, wo, co});
}

Tensor PatchEmbed::operator()(const Tensor& img) const { return patchify(img, *this); }

void PatchEmbed::parameters(const std::string& prefix, nn::ParamList& out) const {
  embed.parameters(prefix, out);
}

Tensor patchify(const Tensor& img, const PatchEmbed& embed) {
  if (img.rank() != 3) throw DimensionError("patchify: expected HxWxC, got " + shape_str(img.shape()));
  const int64_t p = embed.patch_size;
  if (img.dim(0) % p != 0 || img.dim(1) % p != 0) {
    throw ConfigError("patchify: H=" + std::to_string(img.dim(0)) + ", W=" +
                      std::to_string(img.dim(1)) + " not divisible by P=" + std::to_string(p));
  }
  return embed.embed(space_to_depth(img, p));
}

void PatchMerge::parameters(const std::string& prefix, nn::ParamList& out) const {
  reduce.parameters(prefix, out);
}

Tensor patch_merge(const PatchMerge& merge, const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) % 2 != 0 || x.dim(1) % 2 != 0) {
    throw DimensionError("patch_merge: needs even height and width, got " + shape_str(x.shape()));
  }
  return merge.reduce(space_to_depth(x, 2));
}

void PatchExpand::parameters(const std::string& prefix, nn::ParamList& out) const {
  expand.parameters(prefix, out);
}

Tensor patch_expand(const PatchExpand& expand, const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) % 2 != 0) {
    throw DimensionError("patch_expand: needs an even channel count, got " + shape_str(x.shape()));
  }
  return depth_to_space(expand.expand(x), 2);
}

void SerpentBlock::parameters(const std::string& prefix, nn::ParamList& out) const {
  for (size_t i = 0; i < blocks.size(); ++i) blocks[i].parameters(prefix + "." + std::to_string(i), out);
}

Tensor serpent_block(const SerpentBlock& block, const Tensor& x, ssm::ScanStats* stats) {
  Tensor h = x;
  for (const auto& b : block.blocks) h = vss_forward(b, h, stats);
  return h;
}

SerpentModel SerpentModel::create(const SerpentConfig& config, uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  SerpentModel m;
  m.config_ = config;
  const int64_t p = config.patch_size, c_in = config.in_channels, d = config.embed_dim;
  const int64_t stages = config.num_scales - 1;

  auto make_block = [&](int64_t channels) {
    SerpentBlock b;
    for (int64_t i = 0; i < config.depth; ++i) {
      b.blocks.push_back(VssBlock::create(channels, config.state_dim(channels), rng));
    }
    return b;
  };

  m.embed = {p, nn::Linear::create(p * p * c_in, d, rng)};
  for (int64_t s = 0; s < stages; ++s) {
    const int64_t c = config.channels_at(s);
    m.encoder.push_back(make_block(c));
    m.merges.push_back({nn::Linear::create(4 * c, 2 * c, rng)});
  }
  m.bottleneck = make_block(config.channels_at(stages));
  m.expands.resize(static_cast<size_t>(stages));
  m.fuses.resize(static_cast<size_t>(stages));
  m.decoder.resize(static_cast<size_t>(stages));
  for (int64_t s = stages - 1; s >= 0; --s) {
    const int64_t c = config.channels_at(s);
    m.expands[s] = {nn::Linear::create(2 * c, 4 * c, rng)};
    m.fuses[s] = nn::Linear::create(2 * c, c, rng);
    m.decoder[s] = make_block(c);
  }
  m.head = nn::Linear::create(d, p * p * c_in, rng, /*zero_init=*/true);
  return m;
}

Tensor SerpentModel::forward(const Tensor& img, const ForwardOptions& options) const {
  if (img.rank() != 3 || img.dim(2) != config_.in_channels) {
    throw DimensionError("serpent_forward: expected HxWx" + std::to_string(config_.in_channels) +
                         " image, got " + shape_str(img.shape()));
  }
  config_.check_input(img.dim(0), img.dim(1));
  const size_t stages = encoder.size();

  Tensor x = embed(img);
  std::vector<Tensor> skips;
  for (size_t s = 0; s < stages; ++s) {
    x = serpent_block(encoder[s], x, options.stats);
    skips.push_back(options.zero_skips ? Tensor::zeros(x.shape()) : x);
    x = patch_merge(merges[s], x);
  }
  x = serpent_block(bottleneck, x, options.stats);
  for (size_t s = stages; s-- > 0;) {
    x = patch_expand(expands[s], x);
    x = fuses[s](ops::concat_last(x, skips[s]));
    x = serpent_block(decoder[s], x, options.stats);
  }
  const Tensor out = depth_to_space(head(x), config_.patch_size);
  return config_.global_residual ? ops::add(out, img) : out;
}

nn::ParamList SerpentModel::parameters() const {
  nn::ParamList out;
  embed.parameters("embed", out);
  for (size_t s = 0; s < encoder.size(); ++s) {
    encoder[s].parameters("encoder." + std::to_string(s), out);
    merges[s].parameters("merge." + std::to_string(s), out);
  }
  bottleneck.parameters("bottleneck", out);
  for (size_t s = expands.size(); s-- > 0;) {
    expands[s].parameters("expand." + std::to_string(s), out);
    fuses[s].parameters("fuse." + std::to_string(s), out);
    decoder[s].parameters("decoder." + std::to_string(s), out);
  }
  head.parameters("head", out);
  return out;
}

Tensor serpent_forward(const SerpentModel& model, const Tensor& img,
                       const ForwardOptions& options) {
  return model.forward(img, options);
}

ParamReport count_params(const SerpentModel& model) {
  ParamReport r;
  for (const auto& p : model.parameters()) {
    const std::string module = p.name.substr(0, p.name.find('.'));
    const int64_t n = p.tensor.numel();
    r.per_module[module] += n;
    r.total += n;
    if (module != "embed" && module != "head") r.backbone += n;
  }
  return r;
}

uint64_t scan_flops(uint64_t tokens, uint64_t channels, uint64_t state_dim) {
  return tokens * channels * state_dim * kScanOpsPerState;
}

uint64_t attention_flops(uint64_t tokens, uint64_t channels) {
  return 4 * tokens * tokens * channels + 4 * tokens * channels * channels;
}

FlopsReport count_flops(const SerpentConfig& config, int64_t height, int64_t width) {
  config.validate();
  config.check_input(height, width);
  FlopsReport r;
  const uint64_t p = static_cast<uint64_t>(config.patch_size);
  const uint64_t c_in = static_cast<uint64_t>(config.in_channels);
  const uint64_t d = static_cast<uint64_t>(config.embed_dim);
  const uint64_t depth = static_cast<uint64_t>(config.depth);
  const uint64_t t0 = static_cast<uint64_t>(height / config.patch_size) *
                      static_cast<uint64_t>(width / config.patch_size);
  r.tokens = t0;

  auto vss_blocks = [&](uint64_t t, uint64_t c) {
    const uint64_t n = static_cast<uint64_t>(config.state_dim(static_cast<int64_t>(c)));
    for (uint64_t i = 0; i < depth; ++i) {
      r.norm += 2 * kNormOpsPerElement * t * c;
      r.linear += 3 * t * c * c;
      r.dwconv += t * c * VssBlock::kConvKernel * VssBlock::kConvKernel;
      // Four directions: selection projections (B, C, Δ) and the scan itself.
      r.ssm += 4 * (t * c * (2 * n + c) + scan_flops(t, c, n));
      // silu ×2, skip gain, gating product, residual add, direction sum.
      r.elementwise += 6 * t * c;
      r.attention_reference += attention_flops(t, c);
    }
  };

  r.linear += t0 * p * p * c_in * d;
  const int64_t stages = config.num_scales - 1;
  uint64_t t = t0;
  for (int64_t s = 0; s < stages; ++s) {
    const uint64_t c = static_cast<uint64_t>(config.channels_at(s));
    vss_blocks(t, c);
    t /= 4;
    r.linear += t * 4 * c * 2 * c;  // merge
  }
  vss_blocks(t, static_cast<uint64_t>(config.channels_at(stages)));
  for (int64_t s = stages - 1; s >= 0; --s) {
    const uint64_t c = static_cast<uint64_t>(config.channels_at(s));
    r.linear += t * 2 * c * 4 * c;  // expand 2c -> 4c at the coarser scale
    t *= 4;
    r.linear += t * 2 * c * c;      // fuse
    vss_blocks(t, c);
  }
  r.linear += t0 * d * p * p * c_in;
  r.elementwise += static_cast<uint64_t>(height * width) * c_in;  // global residual
  return r;
}

FlopsReport count_flops(const SerpentModel& model, int64_t height, int64_t width) {
  return count_flops(model.config(), height, width);
}

}  // namespace serpent
