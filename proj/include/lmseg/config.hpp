// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON run configuration:
//
//   {
//     "arch":  { "stem_width": 32, "stage_widths": [64,128,256,512], ... },
//     "train": { "lr": 0.01, "weight_decay": 1e-4, "batch_size": 4, "epochs": 30,
//                "label_smoothing": 0.1, "seed": 0, "eval_seed": 20240611,
//                "restore_best": true,
//                "augment": { "rotate_z": true, "tilt": true, "jitter": true,
//                             "tilt_degrees": 1.0, "jitter_amplitude": 0.001 } }
//   }
//
// Every key is optional; unknown keys are errors. LMSEG_SEED, when set,
// overrides train.seed.

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "lmseg/error.hpp"
#include "lmseg/network.hpp"
#include "lmseg/training.hpp"

namespace lmseg {

struct RunConfig {
  ArchConfig arch;
  TrainConfig train;
};

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"label_smoothing", t.label_smoothing},
          {"seed", t.seed},
          {"eval_seed", t.eval_seed},
          {"restore_best", t.restore_best},
          {"augment",
           {{"rotate_z", t.augmentation.rotate_z},
            {"tilt", t.augmentation.tilt},
            {"jitter", t.augmentation.jitter},
            {"tilt_degrees", t.augmentation.tilt_degrees},
            {"jitter_amplitude", t.augmentation.jitter_amplitude}}}};
}

inline nlohmann::json to_json(const RunConfig& r) { return {{"arch", to_json(r.arch)}, {"train", to_json(r.train)}}; }

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) fail(ErrorCode::InvalidConfig, "unknown " + where + " key '" + key + "'");
  }
}

template <class V>
void read_key(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace detail

inline TrainConfig train_from_json(const nlohmann::json& j, TrainConfig t = {}) {
  detail::reject_unknown(j, to_json(t), "train");
  try {
    detail::read_key(j, "lr", t.lr);
    detail::read_key(j, "weight_decay", t.weight_decay);
    detail::read_key(j, "batch_size", t.batch_size);
    detail::read_key(j, "epochs", t.epochs);
    detail::read_key(j, "label_smoothing", t.label_smoothing);
    detail::read_key(j, "seed", t.seed);
    detail::read_key(j, "eval_seed", t.eval_seed);
    detail::read_key(j, "restore_best", t.restore_best);
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      detail::reject_unknown(a, to_json(t).at("augment"), "augment");
      detail::read_key(a, "rotate_z", t.augmentation.rotate_z);
      detail::read_key(a, "tilt", t.augmentation.tilt);
      detail::read_key(a, "jitter", t.augmentation.jitter);
      detail::read_key(a, "tilt_degrees", t.augmentation.tilt_degrees);
      detail::read_key(a, "jitter_amplitude", t.augmentation.jitter_amplitude);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
  }
  t.validate();
  return t;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig r;
  detail::reject_unknown(j, nlohmann::json{{"arch", nullptr}, {"train", nullptr}}, "config");
  if (j.contains("arch")) r.arch = arch_from_json(j.at("arch"));
  if (j.contains("train")) r.train = train_from_json(j.at("train"));
  return r;
}

/// Applies LMSEG_SEED if it is set to an unsigned integer.
inline void apply_seed_override(RunConfig& r) {
  const char* s = std::getenv("LMSEG_SEED");
  if (!s || !*s) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') fail(ErrorCode::InvalidConfig, std::string("LMSEG_SEED is not an unsigned integer: ") + s);
  r.train.seed = v;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "config '" + path.string() + "': " + e.what());
  }
  RunConfig r = run_config_from_json(j);
  apply_seed_override(r);
  return r;
}

}  // namespace lmseg
