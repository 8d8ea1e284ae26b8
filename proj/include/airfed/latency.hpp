#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>

#include "airfed/bound.hpp"
#include "airfed/model_constants.hpp"
#include "airfed/power_control.hpp"

namespace airfed {

struct TimingConfig {
  int symbols_per_block = 0;     // analog symbols per resource block (M)
  double slot_duration_s = 0.0;  // duration of one resource block
  double cycles_per_sample = 0.0;
  double cpu_freq_hz = 0.0;
  int minibatch = 0;             // samples per local epoch (n_b)
  double bandwidth_hz = 0.0;
  int quant_levels = 0;          // s
  int norm_bits = 0;             // S_0

  void validate() const;
};

struct OmaSchedule {
  Eigen::MatrixXd tau;    // K x T upload durations, seconds
  Eigen::MatrixXd p;      // K x T transmit powers, watts
  double total_comm_s = 0.0;
};

struct LatencyPlan {
  int outer_iters = 0;
  int local_epochs = 0;
  double total_latency_s = 0.0;
  double achieved_bound = 0.0;    // gap bound at the returned plan, <= target
  double round_comm_s = 0.0;      // communication seconds per round (mean for OMA)
  double round_comp_s = 0.0;      // computation seconds per round (tau_comp * Omega)
  std::optional<PowerSchedule> air_schedule;
  std::optional<OmaSchedule> oma_schedule;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

// Analog upload time of a q-entry model: ceil(q / M) resource blocks.
double air_round_latency(const TimingConfig& timing, int model_dim);

// Local computation time of one epoch: cycles_per_sample * n_b / f.
double compute_latency(const TimingConfig& timing);

// Stochastic low-precision quantizer: output_i = ||x|| * sign(x_i) * Q_i with
// Q_i randomly rounded to one of the two neighbouring grid points l/s,
// (l+1)/s of |x_i|/||x||.  Unbiased; consumes one uniform draw per component.
Eigen::VectorXd quantize(const Eigen::VectorXd& x, int quant_levels, std::mt19937_64& rng);

// Quantization MSE factor q_hat = min(sqrt(q)/s, q/s^2).
double quantizer_mse_factor(int model_dim, int quant_levels);

// Upload size in bits: q * (1 + ceil(log2 s)) + S_0.  Sign bit plus integer
// level bits per entry, plus the norm scalar.
std::int64_t payload_bits(int model_dim, int quant_levels, int norm_bits);

// Shannon rate bandwidth * log2(1 + p h^2 / sigma_z^2) in bits/s.
double oma_rate(double power_w, double channel, double sigma_z_sq, double bandwidth_hz);

// Minimum total upload time sum_t S/r(p_{k,t}) per device, subject to peak
// and average power budgets, via dual bisection on the average-power
// multiplier with a safeguarded-Newton inner solve.  Upload times are exactly
// tight: tau * r = S.
OmaSchedule solve_oma_schedule(const ChannelRealization& channels, const PowerBudgets& budgets,
                               double sigma_z_sq, const TimingConfig& timing, std::int64_t payload,
                               int outer_iters);

// Smallest T (bisection over [1, T_max], verified against non-monotone
// feasibility by an explicit T-1 check with a linear-scan fallback) such that
// some local-epoch count in omega_range makes the power-optimized air bound
// <= target_gap; returns that plan and its latency T*(tau_tran + tau_comp*Omega).
// channels must provide at least T_max iterations; cfg's outer_iters /
// local_epochs fields are ignored in favour of the searched values.
LatencyPlan solve_air_latency(const LearningConstants& consts, const RateSchedule& sched,
                              const SystemConfig& cfg, const ChannelRealization& channels,
                              const TimingConfig& timing, double target_gap, int t_max,
                              IntRange omega_range, const OptimizerSettings& settings);

// For each feasible Omega, the minimal T with the quantized-upload bound
// <= target_gap (linear scan), then the per-device upload schedule; returns
// the Omega minimizing total latency sum_t(sum_k tau_{k,t}) + T*tau_comp*Omega.
LatencyPlan solve_oma_latency(const LearningConstants& consts, const RateSchedule& sched,
                              const SystemConfig& cfg, const ChannelRealization& channels,
                              const PowerBudgets& oma_budgets, const TimingConfig& timing,
                              double target_gap, int t_max, IntRange omega_range);

}  // namespace airfed
