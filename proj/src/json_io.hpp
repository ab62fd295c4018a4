// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON views of the plain config structs, shared by checkpoints and the
// run-config loader.

#pragma once

#include <json.hpp>

#include "serpent/degrade.hpp"
#include "serpent/harness.hpp"
#include "serpent/model.hpp"

namespace serpent::detail {

inline nlohmann::ordered_json to_json(const SerpentConfig& c) {
  return {{"patch_size", c.patch_size},   {"embed_dim", c.embed_dim},
          {"depth", c.depth},             {"num_scales", c.num_scales},
          {"state_ratio", c.state_ratio}, {"in_channels", c.in_channels},
          {"global_residual", c.global_residual}};
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size}, {"crop", c.crop},
          {"flip", c.flip}, {"seed", c.seed}};
}

inline nlohmann::ordered_json to_json(const DegradationSpec& s) {
  return {{"kernel_size", s.kernel_size}, {"blur_sigma", s.blur_sigma},
          {"noise_sigma", s.noise_sigma}, {"seed", s.seed}, {"clamp", s.clamp}};
}

inline SerpentConfig serpent_config_from_json(const nlohmann::ordered_json& j) {
  SerpentConfig c;
  c.patch_size = j.at("patch_size").get<int64_t>();
  c.embed_dim = j.at("embed_dim").get<int64_t>();
  c.depth = j.at("depth").get<int64_t>();
  c.num_scales = j.at("num_scales").get<int64_t>();
  c.state_ratio = j.at("state_ratio").get<double>();
  c.in_channels = j.at("in_channels").get<int64_t>();
  c.global_residual = j.at("global_residual").get<bool>();
  return c;
}

}  // namespace serpent::detail
