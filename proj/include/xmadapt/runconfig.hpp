#pragma once

#include <cstdint>
#include <string>

#include "xmadapt/fusion.hpp"
#include "xmadapt/trainer.hpp"

namespace xmadapt {

// One experiment, as read from / written to a flat JSON object. Every key is
// optional in the file; unknown keys are rejected so typos cannot silently
// fall back to defaults. Defaults reproduce the reference experiment.
struct RunConfig {
  int64_t image_size = 64;
  int64_t patch_size = 8;
  int64_t embed_dim = 64;
  int64_t depth = 8;
  int64_t adapter_depth = 4;
  int64_t heads = 4;
  double mlp_ratio = 4.0;
  std::string variant = "cross";
  double lambda_dice = 1.0;
  double lambda_ce = 1.0;
  double lr = 1e-3;
  int64_t batch_size = 8;
  int64_t epochs = 30;
  uint64_t seed = 42;
  std::string data_dir;
  std::string out_dir;

  // ConfigError on malformed JSON, unknown keys or wrong value types;
  // IoError when the file cannot be read.
  static RunConfig parse(const std::string& json_text);
  static RunConfig load(const std::string& path);

  std::string to_json() const;  // 2-space indented, all keys
  void validate() const;        // delegates to the per-module validators

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  AdamWConfig adamw_config() const;
};

}  // namespace xmadapt
