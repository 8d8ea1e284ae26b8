#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "airfed/config.hpp"
#include "airfed/fedavg_sim.hpp"

namespace airfed {

// "0,3,8-11" -> {0, 3, 8, 9, 10, 11}.  Order is preserved; duplicates are
// rejected so output files are never written twice.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Deterministic per-seed inputs: training data and held-out set from the data
// substream (in that order), constants estimated from the training data,
// fading magnitudes for channel_iters iterations from the channel substream.
struct SeedInputs {
  std::uint64_t seed = 0;
  SyntheticDataset train;
  SyntheticDataset holdout;
  LearningConstants constants;
  ChannelRealization channels;
};

SeedInputs make_seed_inputs(const ExperimentConfig& cfg, std::uint64_t seed, int channel_iters);

// Each command fans seeds out to a worker pool, then writes per-seed CSVs and
// one merged summary in seed-list order, so outputs are identical however the
// workers are scheduled.

// Power-control comparison: bound-minimizing schedule plus the constant-power
// and per-iteration-MSE baselines.  Writes powers_/denoise_ CSVs per policy
// and power_summary.csv.
void cmd_optimize_power(const ExperimentConfig& cfg, const std::string& out_dir,
                        const std::vector<std::uint64_t>& seeds);

// Federated training traces for the three analog policies, quantized uploads,
// and error-free aggregation; trace_*.csv per run plus train_summary.csv.
void cmd_train(const ExperimentConfig& cfg, const std::string& out_dir,
               const std::vector<std::uint64_t>& seeds);

// Latency-minimal plans hitting target_gap for analog and quantized uploads;
// schedule CSVs per seed plus latency_summary.csv.
void cmd_latency(const ExperimentConfig& cfg, const std::string& out_dir,
                 const std::vector<std::uint64_t>& seeds, double target_gap);

// Gap bounds as a function of the outer-iteration count, one row per T up to
// t_max; bound_vs_iters CSV per seed plus bound_summary.csv with the minima.
void cmd_bound(const ExperimentConfig& cfg, const std::string& out_dir,
               const std::vector<std::uint64_t>& seeds);

}  // namespace airfed
