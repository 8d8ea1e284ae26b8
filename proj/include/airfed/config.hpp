#pragma once

#include <string>

#include "airfed/latency.hpp"
#include "airfed/model_constants.hpp"
#include "airfed/power_control.hpp"

namespace airfed {

// Everything an experiment run needs, loaded from an INI-style file.  Every
// field has a default matching the reference configuration, so an empty file
// is a valid experiment; keys present in the file override.  Physical keys
// carry their unit as a suffix (noise_power_w, slot_duration_s, ...).
struct ExperimentConfig {
  SystemConfig system;
  RateSchedule schedule;
  TimingConfig timing;
  OptimizerSettings optimizer;

  // synthetic data generation
  int samples_per_device = 1000;
  int minibatch_size = 500;
  double label_noise = 0.2;
  int holdout_samples = 2000;
  double ridge_coeff = 0.0;
  double model_bound_margin = 1.1;

  // latency search
  int t_max = 200;
  IntRange omega_range{2, 10};
  Eigen::VectorXd oma_max_power_w;   // upload budgets, watts, length K
  Eigen::VectorXd oma_ave_power_w;

  std::string config_hash;   // FNV-1a of the file bytes, hex

  void validate() const;
};

// The built-in defaults with no file applied.
ExperimentConfig default_experiment_config();

// Parses the file at path over the defaults.  Unknown sections or keys are
// validation errors, as is any malformed value.  Vector-valued keys accept a
// single number (broadcast to all devices) or a comma-separated list.
ExperimentConfig load_config(const std::string& path);

// Same, from already-read file contents (hash covers exactly these bytes).
ExperimentConfig parse_config(const std::string& text);

// 64-bit FNV-1a of the raw bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace airfed
