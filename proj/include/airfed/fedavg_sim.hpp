#pragma once

#include <Eigen/Dense>
#include <random>

#include "airfed/bound.hpp"
#include "airfed/dataset.hpp"
#include "airfed/model_constants.hpp"
#include "airfed/random_stream.hpp"

namespace airfed {

enum class AggregationMode { air, oma, ideal };

// Row i describes the state after i completed outer iterations; row 0 is the
// initial model.  Aggregation columns are zero in row 0 (nothing aggregated
// yet) and device_energy holds the realized per-symbol transmit energy
// p_{k,t} ||w_k||^2 / q per device and iteration (zero outside analog mode).
struct TrainingTrace {
  Eigen::VectorXd loss;              // length T+1, global objective F
  Eigen::VectorXd gap;               // loss - optimum_loss
  Eigen::VectorXd pred_mse;          // held-out mean squared prediction error
  Eigen::VectorXd agg_err_sq;        // ||aggregate - true mean||^2, length T+1
  Eigen::VectorXd agg_misalign_sq;   // squared norm of the deterministic part
  Eigen::MatrixXd device_energy;     // K x T
  Eigen::VectorXd final_model;

  int iters() const { return static_cast<int>(loss.size()) - 1; }
};

// Linear-regression data: rows of X are iid standard normal, labels are
// x(1) + 3 x(4) + label_noise * N(0,1).  Samples are split into num_devices
// contiguous equal shards.  model_dim must be >= 5 so both signal entries
// exist.
SyntheticDataset generate_synthetic_dataset(int model_dim, int total_samples, int num_devices,
                                            double label_noise, std::mt19937_64& rng);

// Unit-scale Rayleigh fading magnitudes h = sqrt(-log(1 - U)), so h^2 is
// Exp(1) with mean 1.  Filled iteration by iteration (devices inner).
ChannelRealization sample_channels(int num_devices, int outer_iters, std::mt19937_64& rng);

// F(w) = ||X w - y||^2 / (2 |D|).
double global_loss(const SyntheticDataset& dataset, const Eigen::VectorXd& model);

// Mean squared prediction error (no 1/2 factor).
double prediction_mse(const SyntheticDataset& dataset, const Eigen::VectorXd& model);

// local_epochs minibatch SGD steps on device's shard, each on a fresh
// uniform without-replacement minibatch of size minibatch_size, constant step
// size gamma.
Eigen::VectorXd local_sgd_epochs(const Eigen::VectorXd& model, const SyntheticDataset& dataset,
                                 int device, double gamma, int local_epochs, int minibatch_size,
                                 std::mt19937_64& rng);

// Analog superposition: (sum_k h_k sqrt(p_k) w_k + z) / (sqrt(eta) K) with
// z ~ N(0, sigma_z^2 I).  Noise draws are consumed even when sigma_z^2 = 0 so
// paired runs stay aligned.
Eigen::VectorXd air_aggregate(const Eigen::MatrixXd& local_models, const Eigen::VectorXd& h_col,
                              const Eigen::VectorXd& p_col, double eta, double sigma_z_sq,
                              std::mt19937_64& noise_rng);

// Mean of stochastically quantized local models.
Eigen::VectorXd oma_aggregate(const Eigen::MatrixXd& local_models, int quant_levels,
                              std::mt19937_64& quant_rng);

// Full federated run from the zero model.  For analog mode, schedule and
// channels must cover outer_iters columns; quant_levels is used only in
// quantized mode.  Draws come from the stream's minibatch / noise / quantize
// substreams, so two runs with equal seeds see identical minibatches.
TrainingTrace run_training(const SystemConfig& cfg, const RateSchedule& sched,
                           const SyntheticDataset& train, const SyntheticDataset& holdout,
                           double optimum_loss, int minibatch_size, AggregationMode mode,
                           const PowerSchedule* schedule, const ChannelRealization* channels,
                           int quant_levels, RandomStream& stream);

}  // namespace airfed
