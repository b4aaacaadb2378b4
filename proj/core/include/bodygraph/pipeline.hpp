// End-to-end pipeline stages behind the CLI: synth -> extract -> decimate ->
// register -> train/eval, plus sweep and cohort stats. Every stage is
// deterministic given the config and records a resolved-config copy and an
// input content hash in its output directory.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodygraph/train.hpp"

namespace bodygraph {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required earlier stage has not produced its outputs yet.
struct MissingPrerequisite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inputs changed since this stage last ran; rerun with force to regenerate.
struct StaleInputs : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  int version = 1;
  std::uint64_t seed = 7;
  std::string workdir = "out";

  // cohort
  int cohort_size = 20;
  std::array<double, 3> spacing{6.0, 6.0, 6.0};
  std::array<int, 3> dims{0, 0, 0};  // all-zero: use recommended_dims(spacing)
  double female_fraction = 0.5;
  int close_radius = 2;  // default segmentation chain: close(r) then largest component

  int silhouette_downsample = 2;
  std::vector<int> decimation_levels{100, 200, 500, 1000, 5000, 10000};

  int icp_max_iters = 50;
  double icp_tol_mm = 1e-6;

  // model + training
  std::string model_kind = "gnn";
  int hidden = 64;
  std::array<int, 3> cnn_channels{16, 32, 64};
  int epochs = 150;
  int cnn_epochs = 20;
  int batch_size = 16;
  AdamCfg adam;
  ShrinkageCfg shrinkage;
  int folds = 5;
  int train_level = 500;
  bool report_timing = true;

  // sweep
  std::vector<int> sweep_levels;  // empty: use decimation_levels
  int sweep_epochs = 3;
  std::vector<int> sweep_folds{0};

  int stats_bins = 20;
  double device_watts = 0.0;

  // runtime (CLI flags, not part of the config file)
  int jobs = 1;
  bool force = false;

  std::array<int, 3> resolved_dims() const;
  TrainCfg train_cfg() const;
};

// Parses and validates the JSON config; error messages carry the offending
// field path. `seed_override` >= 0 replaces the file's seed.
PipelineConfig load_config(const std::string& path, long long seed_override = -1);
PipelineConfig default_config();

// Canonical JSON dump of the resolved config (stable byte-wise).
std::string resolved_config_json(const PipelineConfig& cfg);

// FNV-1a 64 content hash, hex-encoded.
std::string hash_bytes(const void* data, std::size_t n, std::uint64_t seed = 14695981039346656037ULL);
std::string hash_files(const std::vector<std::string>& paths, const std::string& extra);

void cmd_synth(const PipelineConfig& cfg);
void cmd_extract(const PipelineConfig& cfg);
void cmd_decimate(const PipelineConfig& cfg);
void cmd_register(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_eval(const PipelineConfig& cfg);
void cmd_sweep(const PipelineConfig& cfg);
void cmd_stats(const PipelineConfig& cfg);

}  // namespace bodygraph
