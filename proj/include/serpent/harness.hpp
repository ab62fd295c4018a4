// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion, the training loop, checkpoints and evaluation for
// Gaussian deblurring.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "serpent/degrade.hpp"
#include "serpent/image.hpp"
#include "serpent/model.hpp"
#include "serpent/nn.hpp"

namespace serpent {

namespace fs = std::filesystem;

/// Missing, empty or undecodable dataset directories.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or other failure while optimising.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint whose architecture echo disagrees with the requested config.
class CheckpointMismatch : public std::runtime_error {
 public:
  CheckpointMismatch(std::string field, const std::string& detail)
      : std::runtime_error(detail), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct Dataset {
  std::vector<std::string> names;  // file names, lexicographic order
  std::vector<Image> images;
  std::vector<size_t> train;       // indices into images
  std::vector<size_t> val;

  size_t size() const { return images.size(); }
};

/// Loads every *.png in `dir` (sorted by name). The last 10% (at least one
/// image once there are two or more) forms the validation split; a single
/// image serves as both splits.
Dataset load_dataset(const fs::path& dir, int64_t channels = 3);

struct TrainConfig {
  int64_t epochs = 20;
  double learning_rate = 5e-4;
  int64_t batch_size = 1;  // gradients accumulated over this many crops
  int64_t crop = 64;       // pixels; rounded down to the model's size multiple
  bool flip = true;        // random horizontal flips
  uint64_t seed = 0;       // weights, crop positions, shuffling

  void validate() const;
};

class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(const nn::ParamList& params);

  /// One update from the gradients currently stored on `params`, which must
  /// be the list the optimiser was built from.
  void step(nn::ParamList& params, double lr);

  int64_t steps() const { return t_; }
  std::vector<std::vector<float>>& first_moment() { return m_; }
  std::vector<std::vector<float>>& second_moment() { return v_; }
  void set_steps(int64_t t) { t_ = t; }

 private:
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

struct EpochRecord {
  int64_t epoch = 0;  // 1-based
  double loss = 0.0;  // mean L1 over training crops
  double psnr = 0.0;  // mean over validation images
  double ssim = 0.0;
  double wall_ms = 0.0;

  /// One JSON line; wall_ms is omitted when `timing` is false.
  std::string to_json(bool timing = true) const;
};

struct TrainOptions {
  fs::path out_dir;                 // train.jsonl, last.ckpt, best.ckpt
  std::optional<fs::path> resume;   // continue from this checkpoint
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> records;  // epochs run by this call
  int64_t best_epoch = 0;
  double best_psnr = 0.0;
};

TrainResult train(SerpentModel& model, const Dataset& data, const TrainConfig& config,
                  const DegradationSpec& spec, const TrainOptions& options);
TrainResult train(SerpentModel& model, const fs::path& dataset_dir, const TrainConfig& config,
                  const DegradationSpec& spec, const TrainOptions& options);

/// Degraded input for image `index` of a dataset under evaluation.
Image eval_input(const Image& clean, const DegradationSpec& spec, size_t index);
/// Largest centred crop whose sides are multiples of `multiple`.
Image center_crop_to_multiple(const Image& img, int64_t multiple);
/// Runs the model without recording a graph and clamps to [0, 1].
Image restore(const SerpentModel& model, const Image& input);

// ---- checkpoints ----------------------------------------------------------

struct Checkpoint {
  SerpentConfig model;
  std::string metadata;  // JSON text
  TensorTable table;
};

/// Writes "param/<name>" for every model parameter followed by `extra`.
void save_checkpoint(const fs::path& path, const SerpentModel& model, const std::string& metadata,
                     const std::vector<NamedTensor>& extra = {});
Checkpoint load_checkpoint(const fs::path& path);
/// Throws CheckpointMismatch naming the first differing model field.
void check_compatible(const SerpentConfig& expected, const SerpentConfig& stored);
/// Copies "param/<name>" tensors into the model.
void load_parameters(SerpentModel& model, const Checkpoint& ckpt);
SerpentModel model_from_checkpoint(const Checkpoint& ckpt);

// ---- evaluation -----------------------------------------------------------

enum class EvalSplit { All, Val };

struct EvalOptions {
  EvalSplit split = EvalSplit::All;
  std::optional<fs::path> dump_dir;  // input | output | target PNGs
};

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double input_psnr = 0.0;  // degraded vs clean
  double input_ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_input_psnr = 0.0;
  double mean_input_ssim = 0.0;
  int64_t params = 0;
  uint64_t flops = 0;  // per image at the first row's resolution
  double wall_ms = 0.0;

  std::string to_json(bool timing = true) const;
};

EvalReport evaluate(const SerpentModel& model, const Dataset& data, const DegradationSpec& spec,
                    const EvalOptions& options = {});
EvalReport evaluate(const SerpentModel& model, const fs::path& dataset_dir,
                    const DegradationSpec& spec, const EvalOptions& options = {});

// ---- synthetic data -------------------------------------------------------

/// Writes `count` procedurally drawn RGB images (gradients, rectangles,
/// discs, stripes) named img_0000.png, ... into `dir`.
void synthesize_dataset(const fs::path& dir, int64_t count, int64_t size, uint64_t seed);

}  // namespace serpent
