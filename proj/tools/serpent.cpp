// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// serpent: command-line front end.
//
//   serpent train   [--config F] [--seed N] [--resume CKPT] [key=value ...]
//   serpent eval    [--config F] [key=value ...]
//   serpent profile | degrade | bench | synth  [--config F] [key=value ...]
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad input (paths, data, config),
// 3 checkpoint does not match the configured architecture.
// SERPENT_VERBOSE=0 silences progress output on stderr.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "serpent/config.hpp"
#include "serpent/harness.hpp"
#include "serpent/metrics.hpp"
#include "serpent/model.hpp"
#include "serpent/serialize.hpp"
#include "serpent/ssm.hpp"

namespace {

using namespace serpent;
using json = nlohmann::ordered_json;

enum ExitCode { kOk = 0, kRuntime = 1, kBadInput = 2, kMismatch = 3 };

bool verbose() {
  const char* v = std::getenv("SERPENT_VERBOSE");
  return v == nullptr || std::string(v) != "0";
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::string keys_help() {
  std::ostringstream os;
  os << "Config keys (dotted key = default [unit]: meaning). Set them in a JSON\n"
        "config file ({\"section\": {\"key\": value}}) or as key=value arguments.\n";
  for (const auto& k : config_keys()) {
    os << "  " << k.key << " = " << k.default_value << " [" << k.unit << "]: " << k.help << "\n";
  }
  return os.str();
}

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
};

RunConfig resolve(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_file.empty()) apply_config_file(cfg, args.config_file);
  for (const auto& o : args.overrides) apply_override(cfg, o);
  if (args.seed) cfg.train.seed = *args.seed;
  cfg.validate();
  return cfg;
}

// ---- commands ------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const std::optional<std::string>& resume) {
  const fs::path out = cfg.paths.out_dir;
  const Dataset data = load_dataset(cfg.paths.data_dir, cfg.model.in_channels);
  SerpentModel model = SerpentModel::create(cfg.model, cfg.train.seed);
  fs::create_directories(out);
  write_file(out / "config.json", config_to_json(cfg));
  TrainOptions opt;
  opt.out_dir = out;
  if (resume) opt.resume = fs::path(*resume);
  const bool talk = verbose();
  opt.on_epoch = [&](const EpochRecord& r) {
    if (talk) {
      std::fprintf(stderr, "epoch %3lld  loss %.5f  val psnr %.3f dB  ssim %.4f  (%.1f s)\n",
                   static_cast<long long>(r.epoch), r.loss, r.psnr, r.ssim, r.wall_ms / 1000.0);
    }
  };
  const TrainResult res = train(model, data, cfg.train, cfg.degrade, opt);
  std::printf("trained %zu epoch(s); best val psnr %.3f dB at epoch %lld; artifacts in %s\n",
              res.records.size(), res.best_psnr, static_cast<long long>(res.best_epoch),
              out.string().c_str());
  return kOk;
}

int cmd_eval(const RunConfig& cfg) {
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path());
  check_compatible(cfg.model, ckpt.model);
  const SerpentModel model = model_from_checkpoint(ckpt);
  const Dataset data = load_dataset(cfg.paths.data_dir, cfg.model.in_channels);
  const fs::path out = cfg.paths.out_dir;
  EvalOptions opt;
  opt.split = cfg.eval_split();
  if (cfg.eval.dump_images) opt.dump_dir = out / "eval_images";
  const EvalReport r = evaluate(model, data, cfg.degrade, opt);
  write_file(out / "eval.json", r.to_json());
  std::printf("%zu image(s): psnr %.3f dB (input %.3f), ssim %.4f (input %.4f); report %s\n",
              r.rows.size(), r.mean_psnr, r.mean_input_psnr, r.mean_ssim, r.mean_input_ssim,
              (out / "eval.json").string().c_str());
  return kOk;
}

int cmd_profile(const RunConfig& cfg) {
  json rows = json::array();
  std::printf("%-9s %2s %6s %10s %10s %16s %16s %9s\n", "variant", "P", "res", "params", "backbone",
              "flops", "attn_ref_flops", "ratio");
  for (SerpentVariant v : {SerpentVariant::B, SerpentVariant::L, SerpentVariant::H}) {
    SerpentConfig mc = cfg.model;
    mc.patch_size = variant_patch_size(v);
    const SerpentModel model = SerpentModel::create(mc, 0);
    const ParamReport params = count_params(model);
    for (int64_t res : cfg.profile.resolutions) {
      const FlopsReport f = count_flops(mc, res, res);
      const std::string name = variant_name(v);
      std::printf("%-9s %2lld %6lld %10lld %10lld %16llu %16llu %9.3f\n", name.c_str(),
                  static_cast<long long>(mc.patch_size), static_cast<long long>(res),
                  static_cast<long long>(params.total), static_cast<long long>(params.backbone),
                  static_cast<unsigned long long>(f.total()),
                  static_cast<unsigned long long>(f.reference_total()), f.attention_ratio());
      rows.push_back({{"variant", name},
                      {"patch_size", mc.patch_size},
                      {"resolution", res},
                      {"params", params.total},
                      {"backbone_params", params.backbone},
                      {"flops", f.total()},
                      {"ssm_flops", f.ssm},
                      {"attention_reference_flops", f.reference_total()},
                      {"ratio", f.attention_ratio()}});
    }
  }
  write_file(fs::path(cfg.paths.out_dir) / "profile.json", rows.dump(2) + "\n");
  return kOk;
}

int cmd_degrade(const RunConfig& cfg) {
  const Dataset data = load_dataset(cfg.paths.data_dir, cfg.model.in_channels);
  const fs::path out = fs::path(cfg.paths.out_dir) / "degraded";
  fs::create_directories(out);
  for (size_t i = 0; i < data.size(); ++i) {
    write_png(out / data.names[i], eval_input(data.images[i], cfg.degrade, i));
  }
  std::printf("wrote %zu degraded image(s) to %s\n", data.size(), out.string().c_str());
  return kOk;
}

int cmd_bench(const RunConfig& cfg) {
  const BenchConfig& b = cfg.bench;
  std::mt19937_64 rng(b.seed);
  const ssm::SelectiveParams params = ssm::init_selective_params(b.channels, b.state_dim, rng);
  NoGradGuard guard;
  json rows = json::array();
  std::printf("%7s %-10s %12s %8s %10s %6s\n", "L", "mode", "ops", "ratio", "ms", "equal");
  uint64_t prev_ops[2] = {0, 0};
  int64_t prev_len = 0;
  for (int64_t len : b.lengths) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> data(static_cast<size_t>(len * b.channels));
    for (float& v : data) v = u(rng);
    const Tensor U = Tensor::from_data({len, b.channels}, data);
    Tensor ref;
    for (int mode = 0; mode < 2; ++mode) {
      ssm::ScanStats stats;
      double best_ms = 0;
      Tensor y;
      for (int64_t r = 0; r < b.repeats; ++r) {
        ssm::ScanStats s;
        const auto t0 = std::chrono::steady_clock::now();
        y = mode == 0 ? ssm::selective_scan(params, U, &s)
                      : ssm::selective_scan_chunked(params, U, b.chunk, &s);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (r == 0 || ms < best_ms) best_ms = ms;
        stats = s;
      }
      if (mode == 0) ref = y;
      double diff = 0, scale = 0;
      for (int64_t i = 0; i < y.numel(); ++i) {
        diff = std::max(diff, static_cast<double>(std::abs(y.data()[i] - ref.data()[i])));
        scale = std::max(scale, static_cast<double>(std::abs(ref.data()[i])));
      }
      const bool equal = diff <= 1e-5 * std::max(scale, 1e-30);
      const uint64_t ops = stats.total();
      const double ratio = prev_ops[mode] ? static_cast<double>(ops) / prev_ops[mode] : 0.0;
      const char* name = mode == 0 ? "sequential" : "chunked";
      std::printf("%7lld %-10s %12llu %8.3f %10.3f %6s\n", static_cast<long long>(len), name,
                  static_cast<unsigned long long>(ops), ratio, best_ms, equal ? "yes" : "NO");
      json row = {{"length", len}, {"mode", name}, {"ops", ops}};
      row["ops_ratio"] = prev_ops[mode] ? json(ratio) : json(nullptr);
      row["length_ratio"] = prev_len ? json(static_cast<double>(len) / prev_len) : json(nullptr);
      row["equal_to_sequential"] = equal;
      row["wall_ms"] = best_ms;
      rows.push_back(row);
      prev_ops[mode] = ops;
    }
    prev_len = len;
  }
  write_file(fs::path(cfg.paths.out_dir) / "bench.json", rows.dump(2) + "\n");
  return kOk;
}

int cmd_synth(const RunConfig& cfg) {
  synthesize_dataset(cfg.paths.data_dir, cfg.synth.count, cfg.synth.size, cfg.synth.seed);
  std::printf("wrote %lld image(s) to %s\n", static_cast<long long>(cfg.synth.count),
              cfg.paths.data_dir.c_str());
  return kOk;
}

int report(int code, const std::string& what) {
  std::fprintf(stderr, "serpent: %s\n", what.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serpent image restoration: train, evaluate, profile, degrade, bench, synth"};
  app.require_subcommand(1);
  app.footer(keys_help());
  app.set_help_flag("-h,--help", "Print help with every config key");

  CommonArgs args;
  std::optional<std::string> resume;
  auto add = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", args.config_file, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", args.seed, "Override train.seed");
    sub->add_option("overrides", args.overrides, "section.key=value overrides");
    sub->footer(keys_help());
    return sub;
  };
  CLI::App* train_cmd = add("train", "Train on paths.data_dir, writing logs and checkpoints to paths.out_dir");
  train_cmd->add_option("--resume", resume, "Continue from this checkpoint");
  add("eval", "Evaluate a checkpoint, writing eval.json to paths.out_dir");
  add("profile", "Parameter and FLOP table for the B/L/H variants");
  add("degrade", "Write degraded copies of paths.data_dir to <out_dir>/degraded");
  add("bench", "Time and count selective scans across sequence lengths");
  add("synth", "Write a procedural dataset to paths.data_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    const RunConfig cfg = resolve(args);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train") return cmd_train(cfg, resume);
    if (cmd == "eval") return cmd_eval(cfg);
    if (cmd == "profile") return cmd_profile(cfg);
    if (cmd == "degrade") return cmd_degrade(cfg);
    if (cmd == "bench") return cmd_bench(cfg);
    return cmd_synth(cfg);
  } catch (const CheckpointMismatch& e) {
    return report(kMismatch, e.what());
  } catch (const DatasetError& e) {
    return report(kBadInput, e.what());
  } catch (const ImageError& e) {
    return report(kBadInput, e.what());
  } catch (const FormatError& e) {
    return report(kBadInput, e.what());
  } catch (const std::invalid_argument& e) {  // config, degradation and shape errors
    return report(kBadInput, e.what());
  } catch (const std::exception& e) {
    return report(kRuntime, e.what());
  }
}
