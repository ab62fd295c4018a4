// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json_io.hpp"
#include "serpent/metrics.hpp"
#include "serpent/ops.hpp"
#include "serpent/serialize.hpp"

namespace serpent {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kCheckpointFormat = "serpent-checkpoint";
constexpr int kCheckpointVersion = 1;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

int64_t round_down(int64_t v, int64_t m) { return v / m * m; }

// Noise for training crops changes every epoch; evaluation noise is fixed per image.
uint64_t train_noise_seed(const DegradationSpec& spec, size_t index, int64_t epoch) {
  return derive_seed(spec.seed, {static_cast<uint64_t>(index), static_cast<uint64_t>(epoch)});
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

// ---- dataset --------------------------------------------------------------

Dataset load_dataset(const fs::path& dir, int64_t channels) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DatasetError("dataset directory not found: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") names.push_back(entry.path().filename().string());
  }
  if (names.empty()) throw DatasetError("no PNG images in " + dir.string());
  std::sort(names.begin(), names.end());

  Dataset data;
  data.names = names;
  for (const auto& name : names) {
    try {
      data.images.push_back(read_png(dir / name, channels));
    } catch (const ImageError& e) {
      throw DatasetError(e.what());
    }
  }
  const size_t n = names.size();
  const size_t val = n < 2 ? 0 : std::max<size_t>(1, n / 10);
  for (size_t i = 0; i < n - val; ++i) data.train.push_back(i);
  for (size_t i = n - val; i < n; ++i) data.val.push_back(i);
  if (data.val.empty()) data.val = data.train;
  return data;
}

// ---- optimiser ------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be a finite value >= 0");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (crop < 1) throw ConfigError("train.crop must be >= 1");
}

Adam::Adam(const nn::ParamList& params) {
  for (const auto& p : params) {
    m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
  }
}

void Adam::step(nn::ParamList& params, double lr) {
  if (params.size() != m_.size()) throw std::logic_error("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].tensor;
    if (!p.has_grad()) continue;  // unused this step; moments and weights stay put
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      const double mh = m[k] / c1;
      const double vh = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

// ---- evaluation helpers ---------------------------------------------------

Image eval_input(const Image& clean, const DegradationSpec& spec, size_t index) {
  return degrade(clean, spec, derive_seed(spec.seed, {static_cast<uint64_t>(index)}));
}

Image center_crop_to_multiple(const Image& img, int64_t multiple) {
  const int64_t h = round_down(img.height, multiple), w = round_down(img.width, multiple);
  if (h < 1 || w < 1) {
    throw DatasetError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                       " is smaller than the model's size multiple " + std::to_string(multiple));
  }
  if (h == img.height && w == img.width) return img;
  return crop(img, (img.height - h) / 2, (img.width - w) / 2, h, w);
}

Image restore(const SerpentModel& model, const Image& input) {
  NoGradGuard guard;
  Image out = Image::from_tensor(model.forward(input.to_tensor()));
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::string EpochRecord::to_json(bool timing) const {
  json j = {{"epoch", epoch}, {"loss", loss}, {"psnr", psnr}, {"ssim", ssim}};
  if (timing) j["wall_ms"] = wall_ms;
  return j.dump();
}

namespace {

struct ValScore {
  double psnr = 0.0;
  double ssim = 0.0;
};

ValScore validate(const SerpentModel& model, const Dataset& data, const DegradationSpec& spec) {
  const int64_t m = model.config().size_multiple();
  ValScore s;
  for (size_t idx : data.val) {
    const Image clean = center_crop_to_multiple(data.images[idx], m);
    const Image input = center_crop_to_multiple(eval_input(data.images[idx], spec, idx), m);
    const Image out = restore(model, input);
    s.psnr += psnr(out, clean);
    s.ssim += ssim(out, clean);
  }
  s.psnr /= static_cast<double>(data.val.size());
  s.ssim /= static_cast<double>(data.val.size());
  return s;
}

json state_json(int64_t epoch, int64_t adam_steps, int64_t best_epoch, double best_psnr,
                const std::mt19937_64& rng) {
  return {{"epoch", epoch},
          {"adam_steps", adam_steps},
          {"best_epoch", best_epoch},
          {"best_psnr", best_psnr},
          {"rng", rng_state(rng)}};
}

std::vector<NamedTensor> adam_tensors(const nn::ParamList& params, Adam& adam) {
  std::vector<NamedTensor> out;
  for (size_t i = 0; i < params.size(); ++i) {
    const Shape& shape = params[i].tensor.shape();
    out.push_back({"adam.m/" + params[i].name, Tensor::from_data(shape, adam.first_moment()[i])});
    out.push_back({"adam.v/" + params[i].name, Tensor::from_data(shape, adam.second_moment()[i])});
  }
  return out;
}

// Rewrites the log keeping only rows up to and including `epoch`.
void truncate_log(const fs::path& path, int64_t epoch) {
  std::ifstream is(path);
  std::string kept, line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line);
    if (row.at("epoch").get<int64_t>() <= epoch) kept += line + "\n";
  }
  is.close();
  write_text(path, kept);
}

}  // namespace

// ---- training -------------------------------------------------------------

TrainResult train(SerpentModel& model, const Dataset& data, const TrainConfig& config,
                  const DegradationSpec& spec, const TrainOptions& options) {
  config.validate();
  spec.validate();
  if (data.train.empty()) throw DatasetError("dataset has no training images");
  const SerpentConfig& mc = model.config();
  const int64_t multiple = mc.size_multiple();
  for (size_t i = 0; i < data.size(); ++i) {
    const Image& im = data.images[i];
    if (im.channels != mc.in_channels) {
      throw DatasetError(data.names[i] + " has " + std::to_string(im.channels) +
                         " channels, model expects " + std::to_string(mc.in_channels));
    }
    if (im.height < multiple || im.width < multiple) {
      throw DatasetError(data.names[i] + " is smaller than the model's size multiple " +
                         std::to_string(multiple));
    }
  }

  nn::ParamList params = model.parameters();
  Adam adam(params);
  std::mt19937_64 rng(derive_seed(config.seed, {0x7261696eull}));
  int64_t start_epoch = 0;
  TrainResult result;

  fs::create_directories(options.out_dir);
  const fs::path log_path = options.out_dir / "train.jsonl";
  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume);
    check_compatible(mc, ckpt.model);
    load_parameters(model, ckpt);
    const json meta = json::parse(ckpt.metadata);
    const json& st = meta.at("state");
    start_epoch = st.at("epoch").get<int64_t>();
    adam.set_steps(st.at("adam_steps").get<int64_t>());
    result.best_epoch = st.at("best_epoch").get<int64_t>();
    result.best_psnr = st.at("best_psnr").get<double>();
    std::istringstream(st.at("rng").get<std::string>()) >> rng;
    for (size_t i = 0; i < params.size(); ++i) {
      for (auto [prefix, dst] : {std::pair{"adam.m/", &adam.first_moment()[i]},
                                 std::pair{"adam.v/", &adam.second_moment()[i]}}) {
        const Tensor* t = ckpt.table.find(prefix + params[i].name);
        if (t == nullptr || t->numel() != static_cast<int64_t>(dst->size())) {
          throw FormatError("checkpoint lacks optimiser state for " + params[i].name);
        }
        dst->assign(t->data().begin(), t->data().end());
      }
    }
    truncate_log(log_path, start_epoch);
  } else {
    write_text(log_path, "");
  }

  json meta_base = {{"format", kCheckpointFormat},
                    {"version", kCheckpointVersion},
                    {"model", detail::to_json(mc)},
                    {"train", detail::to_json(config)},
                    {"degrade", detail::to_json(spec)}};

  for (int64_t epoch = start_epoch + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Fresh permutation of the sorted order so the epoch depends only on the RNG state.
    std::vector<size_t> order = data.train;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int64_t in_batch = 0;
    for (size_t step = 0; step < order.size(); ++step) {
      const size_t idx = order[step];
      const Image& clean = data.images[idx];
      const Image noisy = degrade(clean, spec, train_noise_seed(spec, idx, epoch));
      const int64_t ch = round_down(std::min(config.crop, clean.height), multiple);
      const int64_t cw = round_down(std::min(config.crop, clean.width), multiple);
      const int64_t top = std::uniform_int_distribution<int64_t>(0, clean.height - ch)(rng);
      const int64_t left = std::uniform_int_distribution<int64_t>(0, clean.width - cw)(rng);
      const bool flip = config.flip && (rng() & 1u);
      Image x = crop(noisy, top, left, ch, cw);
      Image y = crop(clean, top, left, ch, cw);
      if (flip) {
        x = flip_horizontal(x);
        y = flip_horizontal(y);
      }
      const Tensor out = model.forward(x.to_tensor());
      const Tensor loss = ops::l1_loss(out, y.to_tensor());
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step) + " (image " + data.names[idx] + ")");
      }
      loss_sum += value;
      const int64_t batch = std::min<int64_t>(config.batch_size,
                                              static_cast<int64_t>(order.size() - (step - in_batch)));
      backward(ops::scale(loss, 1.0f / static_cast<float>(batch)));
      if (++in_batch == batch) {
        adam.step(params, config.learning_rate);
        for (auto& p : params) p.tensor.zero_grad();
        in_batch = 0;
      }
    }

    const ValScore val = validate(model, data, spec);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(order.size());
    rec.psnr = val.psnr;
    rec.ssim = val.ssim;
    const bool best = result.best_epoch == 0 || val.psnr > result.best_psnr;
    if (best) {
      result.best_epoch = epoch;
      result.best_psnr = val.psnr;
    }

    json meta = meta_base;
    meta["state"] = state_json(epoch, adam.steps(), result.best_epoch, result.best_psnr, rng);
    const auto extra = adam_tensors(params, adam);
    save_checkpoint(options.out_dir / "last.ckpt", model, meta.dump(), extra);
    if (best) save_checkpoint(options.out_dir / "best.ckpt", model, meta.dump(), extra);

    rec.wall_ms = elapsed_ms(t0);
    {
      std::ofstream log(log_path, std::ios::app);
      log << rec.to_json() << "\n";
    }
    result.records.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  return result;
}

TrainResult train(SerpentModel& model, const fs::path& dataset_dir, const TrainConfig& config,
                  const DegradationSpec& spec, const TrainOptions& options) {
  return train(model, load_dataset(dataset_dir, model.config().in_channels), config, spec, options);
}

// ---- checkpoints ----------------------------------------------------------

void save_checkpoint(const fs::path& path, const SerpentModel& model, const std::string& metadata,
                     const std::vector<NamedTensor>& extra) {
  TensorTable table;
  table.metadata = metadata;
  for (const auto& p : model.parameters()) table.tensors.push_back({"param/" + p.name, p.tensor});
  for (const auto& e : extra) table.tensors.push_back(e);
  const fs::path tmp = path.string() + ".tmp";
  save_tensor_table(tmp.string(), table);
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw DatasetError("checkpoint not found: " + path.string());
  Checkpoint ckpt;
  ckpt.table = load_tensor_table(path.string());
  ckpt.metadata = ckpt.table.metadata;
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
    if (meta.at("format").get<std::string>() != kCheckpointFormat) throw FormatError("wrong format tag");
    if (meta.at("version").get<int>() != kCheckpointVersion) throw FormatError("unsupported version");
    ckpt.model = detail::serpent_config_from_json(meta.at("model"));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return ckpt;
}

void check_compatible(const SerpentConfig& expected, const SerpentConfig& stored) {
  auto differ = [](const std::string& field, auto want, auto have) {
    if (want != have) {
      std::ostringstream os;
      os << "checkpoint mismatch in model." << field << ": config has " << want
         << ", checkpoint has " << have;
      throw CheckpointMismatch("model." + field, os.str());
    }
  };
  differ("patch_size", expected.patch_size, stored.patch_size);
  differ("embed_dim", expected.embed_dim, stored.embed_dim);
  differ("depth", expected.depth, stored.depth);
  differ("num_scales", expected.num_scales, stored.num_scales);
  differ("state_ratio", expected.state_ratio, stored.state_ratio);
  differ("in_channels", expected.in_channels, stored.in_channels);
  differ("global_residual", expected.global_residual, stored.global_residual);
}

void load_parameters(SerpentModel& model, const Checkpoint& ckpt) {
  for (auto& p : model.parameters()) {
    const Tensor* t = ckpt.table.find("param/" + p.name);
    if (t == nullptr) throw FormatError("checkpoint lacks parameter " + p.name);
    if (t->shape() != p.tensor.shape()) {
      throw FormatError("checkpoint parameter " + p.name + " has shape " + shape_str(t->shape()) +
                        ", model expects " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(t->data().begin(), t->data().end(), dst.begin());
  }
}

SerpentModel model_from_checkpoint(const Checkpoint& ckpt) {
  SerpentModel model = SerpentModel::create(ckpt.model, 0);
  load_parameters(model, ckpt);
  return model;
}

// ---- evaluation -----------------------------------------------------------

std::string EvalReport::to_json(bool timing) const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"name", r.name},
                      {"psnr", r.psnr},
                      {"ssim", r.ssim},
                      {"input_psnr", r.input_psnr},
                      {"input_ssim", r.input_ssim}});
  }
  json j = {{"images", rows.size()},
            {"mean_psnr", mean_psnr},
            {"mean_ssim", mean_ssim},
            {"mean_input_psnr", mean_input_psnr},
            {"mean_input_ssim", mean_input_ssim},
            {"params", params},
            {"flops", flops}};
  if (timing) j["wall_ms"] = wall_ms;
  j["rows"] = rows_j;
  return j.dump(2) + "\n";
}

EvalReport evaluate(const SerpentModel& model, const Dataset& data, const DegradationSpec& spec,
                    const EvalOptions& options) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int64_t multiple = model.config().size_multiple();
  std::vector<size_t> indices(data.size());
  std::iota(indices.begin(), indices.end(), size_t{0});
  if (options.split == EvalSplit::Val) indices = data.val;
  if (indices.empty()) throw DatasetError("nothing to evaluate");
  if (options.dump_dir) fs::create_directories(*options.dump_dir);

  EvalReport report;
  for (size_t idx : indices) {
    const Image clean = center_crop_to_multiple(data.images[idx], multiple);
    const Image input = center_crop_to_multiple(eval_input(data.images[idx], spec, idx), multiple);
    const Image out = restore(model, input);
    EvalRow row;
    row.name = data.names[idx];
    row.psnr = psnr(out, clean);
    row.ssim = ssim(out, clean);
    row.input_psnr = psnr(input, clean);
    row.input_ssim = ssim(input, clean);
    report.rows.push_back(row);
    if (options.dump_dir) {
      write_png(*options.dump_dir / (fs::path(row.name).stem().string() + "_compare.png"),
                hstack({input, out, clean}));
    }
    if (report.flops == 0) report.flops = count_flops(model, clean.height, clean.width).total();
  }
  const double n = static_cast<double>(report.rows.size());
  for (const auto& r : report.rows) {
    report.mean_psnr += r.psnr;
    report.mean_ssim += r.ssim;
    report.mean_input_psnr += r.input_psnr;
    report.mean_input_ssim += r.input_ssim;
  }
  report.mean_psnr /= n;
  report.mean_ssim /= n;
  report.mean_input_psnr /= n;
  report.mean_input_ssim /= n;
  report.params = count_params(model).total;
  report.wall_ms = elapsed_ms(t0);
  return report;
}

EvalReport evaluate(const SerpentModel& model, const fs::path& dataset_dir,
                    const DegradationSpec& spec, const EvalOptions& options) {
  return evaluate(model, load_dataset(dataset_dir, model.config().in_channels), spec, options);
}

// ---- synthetic data -------------------------------------------------------

void synthesize_dataset(const fs::path& dir, int64_t count, int64_t size, uint64_t seed) {
  if (count < 1 || size < 1) throw ConfigError("synth: count and size must be >= 1");
  fs::create_directories(dir);
  for (int64_t n = 0; n < count; ++n) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<uint64_t>(n)}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto colour = [&] { return std::array<double, 3>{u(rng), u(rng), u(rng)}; };
    Image img = Image::blank(size, size, 3);
    const double s = static_cast<double>(size);

    // Smooth background: bilinear blend of four corner colours.
    const auto c00 = colour(), c01 = colour(), c10 = colour(), c11 = colour();
    for (int64_t y = 0; y < size; ++y) {
      for (int64_t x = 0; x < size; ++x) {
        const double fy = y / s, fx = x / s;
        for (int c = 0; c < 3; ++c) {
          img.at(y, x, c) = static_cast<float>((1 - fy) * ((1 - fx) * c00[c] + fx * c01[c]) +
                                               fy * ((1 - fx) * c10[c] + fx * c11[c]));
        }
      }
    }

    const int shapes = 4 + static_cast<int>(rng() % 6);
    for (int k = 0; k < shapes; ++k) {
      const auto col = colour();
      const int kind = static_cast<int>(rng() % 3);
      const double cy = u(rng) * s, cx = u(rng) * s;
      const double ry = (0.05 + 0.25 * u(rng)) * s, rx = (0.05 + 0.25 * u(rng)) * s;
      const double period = 2.0 + 6.0 * u(rng), angle = u(rng) * 3.14159265358979;
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
          bool inside = false;
          if (kind == 0) {
            inside = std::abs(dy) <= ry && std::abs(dx) <= rx;
          } else if (kind == 1) {
            inside = (dy * dy) / (ry * ry) + (dx * dx) / (rx * rx) <= 1.0;
          } else {
            const double t = dx * std::cos(angle) + dy * std::sin(angle);
            inside = std::abs(dy) <= ry && std::abs(dx) <= rx &&
                     std::fmod(std::abs(t), period) < period / 2;
          }
          if (inside) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(col[c]);
          }
        }
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04lld.png", static_cast<long long>(n));
    write_png(dir / name, img);
  }
}

}  // namespace serpent
