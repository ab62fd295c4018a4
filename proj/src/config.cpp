// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/config.hpp"

#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <type_traits>

#include <json.hpp>

namespace serpent {

using json = nlohmann::ordered_json;

namespace {

struct KeyBinding {
  ConfigKeyInfo info;
  std::function<json(const RunConfig&)> get;
  // raw is the override text when the value came from the command line.
  std::function<void(RunConfig&, const json&, const std::optional<std::string>& raw)> set;
};

template <typename T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_same_v<T, double>) return "a number";
  else if constexpr (std::is_same_v<T, uint64_t>) return "a non-negative integer";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else return "a list of integers";
}

template <typename T>
T convert(const std::string& key, const json& v, const std::optional<std::string>& raw) {
  auto fail = [&] {
    return ConfigError(key + ": expected " + type_name<T>() + ", got " + v.dump());
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw fail();
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (v.is_string()) return v.get<std::string>();
    if (raw) return *raw;
    throw fail();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw fail();
    return v.get<double>();
  } else if constexpr (std::is_same_v<T, uint64_t>) {
    if (!v.is_number_unsigned()) throw fail();
    return v.get<uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw fail();
    return v.get<T>();
  } else {
    if (!v.is_array()) throw fail();
    T out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw fail();
      out.push_back(e.get<int64_t>());
    }
    return out;
  }
}

template <typename Access>
KeyBinding bind(std::string key, std::string unit, std::string help, Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  KeyBinding b;
  b.info = {key, "", std::move(unit), std::move(help)};
  b.get = [access](const RunConfig& c) { return json(access(const_cast<RunConfig&>(c))); };
  b.set = [access, key](RunConfig& c, const json& v, const std::optional<std::string>& raw) {
    access(c) = convert<T>(key, v, raw);
  };
  return b;
}

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> table = [] {
    std::vector<KeyBinding> t;
    // model
    t.push_back(bind("model.patch_size", "pixels", "patch size P (1, 2 or 4)",
                     [](RunConfig& c) -> auto& { return c.model.patch_size; }));
    t.push_back(bind("model.embed_dim", "channels", "embedding width D at the finest scale",
                     [](RunConfig& c) -> auto& { return c.model.embed_dim; }));
    t.push_back(bind("model.depth", "blocks", "VSS blocks per scale n",
                     [](RunConfig& c) -> auto& { return c.model.depth; }));
    t.push_back(bind("model.num_scales", "scales", "encoder stages + bottleneck",
                     [](RunConfig& c) -> auto& { return c.model.num_scales; }));
    t.push_back(bind("model.state_ratio", "ratio", "SSM state dim per channel (N = round(c*ratio))",
                     [](RunConfig& c) -> auto& { return c.model.state_ratio; }));
    t.push_back(bind("model.in_channels", "channels", "image channels (1 or 3)",
                     [](RunConfig& c) -> auto& { return c.model.in_channels; }));
    t.push_back(bind("model.global_residual", "flag", "add the input image to the output",
                     [](RunConfig& c) -> auto& { return c.model.global_residual; }));
    // train
    t.push_back(bind("train.epochs", "epochs", "passes over the training split",
                     [](RunConfig& c) -> auto& { return c.train.epochs; }));
    t.push_back(bind("train.learning_rate", "1/step", "Adam step size",
                     [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
    t.push_back(bind("train.batch_size", "images", "crops per optimiser step",
                     [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    t.push_back(bind("train.crop", "pixels", "square training crop side",
                     [](RunConfig& c) -> auto& { return c.train.crop; }));
    t.push_back(bind("train.flip", "flag", "random horizontal flips",
                     [](RunConfig& c) -> auto& { return c.train.flip; }));
    t.push_back(bind("train.seed", "seed", "weights, crops and shuffling",
                     [](RunConfig& c) -> auto& { return c.train.seed; }));
    // degrade
    t.push_back(bind("degrade.kernel_size", "pixels", "odd blur kernel side",
                     [](RunConfig& c) -> auto& { return c.degrade.kernel_size; }));
    t.push_back(bind("degrade.blur_sigma", "pixels", "blur std-dev; 0 means kernel_size/6",
                     [](RunConfig& c) -> auto& { return c.degrade.blur_sigma; }));
    t.push_back(bind("degrade.noise_sigma", "intensity [0,1]", "additive Gaussian noise std-dev",
                     [](RunConfig& c) -> auto& { return c.degrade.noise_sigma; }));
    t.push_back(bind("degrade.seed", "seed", "base seed of per-image noise",
                     [](RunConfig& c) -> auto& { return c.degrade.seed; }));
    t.push_back(bind("degrade.clamp", "flag", "clamp degraded images to [0,1]",
                     [](RunConfig& c) -> auto& { return c.degrade.clamp; }));
    // paths
    t.push_back(bind("paths.data_dir", "path", "directory of PNG images",
                     [](RunConfig& c) -> auto& { return c.paths.data_dir; }));
    t.push_back(bind("paths.out_dir", "path", "where artifacts are written",
                     [](RunConfig& c) -> auto& { return c.paths.out_dir; }));
    t.push_back(bind("paths.checkpoint", "path", "checkpoint to evaluate; empty = <out_dir>/best.ckpt",
                     [](RunConfig& c) -> auto& { return c.paths.checkpoint; }));
    // eval
    t.push_back(bind("eval.split", "all|val", "images to evaluate",
                     [](RunConfig& c) -> auto& { return c.eval.split; }));
    t.push_back(bind("eval.dump_images", "flag", "write input|output|target PNGs",
                     [](RunConfig& c) -> auto& { return c.eval.dump_images; }));
    // profile
    t.push_back(bind("profile.resolutions", "pixels", "square input sides to profile",
                     [](RunConfig& c) -> auto& { return c.profile.resolutions; }));
    // bench
    t.push_back(bind("bench.lengths", "tokens", "sequence lengths to scan",
                     [](RunConfig& c) -> auto& { return c.bench.lengths; }));
    t.push_back(bind("bench.channels", "channels", "scan channels E",
                     [](RunConfig& c) -> auto& { return c.bench.channels; }));
    t.push_back(bind("bench.state_dim", "states", "SSM state dim N",
                     [](RunConfig& c) -> auto& { return c.bench.state_dim; }));
    t.push_back(bind("bench.chunk", "tokens", "chunk length of the chunked mode",
                     [](RunConfig& c) -> auto& { return c.bench.chunk; }));
    t.push_back(bind("bench.repeats", "runs", "timing repetitions (best is kept)",
                     [](RunConfig& c) -> auto& { return c.bench.repeats; }));
    t.push_back(bind("bench.seed", "seed", "random inputs and parameters",
                     [](RunConfig& c) -> auto& { return c.bench.seed; }));
    // synth
    t.push_back(bind("synth.count", "images", "synthetic images to write",
                     [](RunConfig& c) -> auto& { return c.synth.count; }));
    t.push_back(bind("synth.size", "pixels", "synthetic image side",
                     [](RunConfig& c) -> auto& { return c.synth.size; }));
    t.push_back(bind("synth.seed", "seed", "synthetic content seed",
                     [](RunConfig& c) -> auto& { return c.synth.seed; }));

    const RunConfig defaults;
    for (auto& b : t) b.info.default_value = b.get(defaults).dump();
    return t;
  }();
  return table;
}

const KeyBinding& find_binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (b.info.key == key) return b;
  }
  throw ConfigError("unknown config key: " + key);
}

}  // namespace

SerpentConfig RunConfig::default_model() {
  SerpentConfig c;
  c.patch_size = 2;
  c.embed_dim = 32;
  c.depth = 2;
  c.num_scales = 2;
  return c;
}

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model.") + e.what());
  }
  train.validate();
  try {
    degrade.validate();
  } catch (const DegradationError& e) {
    throw ConfigError(e.what());
  }
  if (eval.split != "all" && eval.split != "val") {
    throw ConfigError("eval.split must be \"all\" or \"val\", got \"" + eval.split + "\"");
  }
  for (int64_t r : profile.resolutions) {
    if (r < 1) throw ConfigError("profile.resolutions entries must be >= 1");
  }
  if (bench.lengths.empty()) throw ConfigError("bench.lengths must not be empty");
  for (int64_t l : bench.lengths) {
    if (l < 1) throw ConfigError("bench.lengths entries must be >= 1");
  }
  if (bench.channels < 1) throw ConfigError("bench.channels must be >= 1");
  if (bench.state_dim < 1) throw ConfigError("bench.state_dim must be >= 1");
  if (bench.chunk < 1) throw ConfigError("bench.chunk must be >= 1");
  if (bench.repeats < 1) throw ConfigError("bench.repeats must be >= 1");
  if (synth.count < 1) throw ConfigError("synth.count must be >= 1");
  if (synth.size < 1) throw ConfigError("synth.size must be >= 1");
}

fs::path RunConfig::checkpoint_path() const {
  if (!paths.checkpoint.empty()) return paths.checkpoint;
  return fs::path(paths.out_dir) / "best.ckpt";
}

EvalSplit RunConfig::eval_split() const {
  return eval.split == "val" ? EvalSplit::Val : EvalSplit::All;
}

std::vector<ConfigKeyInfo> config_keys() {
  std::vector<ConfigKeyInfo> out;
  for (const auto& b : bindings()) out.push_back(b.info);
  return out;
}

void apply_config_json(RunConfig& config, const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(origin + ": top level must be an object");
  for (const auto& [section, body] : root.items()) {
    if (!body.is_object()) {
      throw ConfigError(origin + ": section \"" + section + "\" must be an object");
    }
    for (const auto& [name, value] : body.items()) {
      const std::string key = section + "." + name;
      try {
        find_binding(key).set(config, value, std::nullopt);
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
      }
    }
  }
}

void apply_config_file(RunConfig& config, const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  apply_config_json(config, os.str(), path.string());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value, got \"" + assignment + "\"");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const KeyBinding& b = find_binding(key);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  b.set(config, value, text);
}

std::string config_to_json(const RunConfig& config) {
  json root = json::object();
  for (const auto& b : bindings()) {
    const std::string& key = b.info.key;
    const size_t dot = key.find('.');
    root[key.substr(0, dot)][key.substr(dot + 1)] = b.get(config);
  }
  return root.dump(2) + "\n";
}

}  // namespace serpent
