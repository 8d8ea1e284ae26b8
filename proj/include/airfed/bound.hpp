#pragma once

#include <Eigen/Dense>

#include "airfed/model_constants.hpp"

namespace airfed {

// Fading magnitudes h_{k,t}, devices along rows, outer iterations along
// columns.
struct ChannelRealization {
  Eigen::MatrixXd h;

  int devices() const { return static_cast<int>(h.rows()); }
  int iters() const { return static_cast<int>(h.cols()); }
  void validate() const;
};

// Transmit power-scaling factors p_{k,t} (K x T) and server denoising factors
// eta_t (length T).
struct PowerSchedule {
  Eigen::MatrixXd p;
  Eigen::VectorXd eta;

  int devices() const { return static_cast<int>(p.rows()); }
  int iters() const { return static_cast<int>(p.cols()); }
  void validate() const;
  // Budget feasibility: p <= max, (1/T) sum_t p <= ave, both within tol.
  void validate_budgets(const PowerBudgets& budgets, double tol) const;
};

// Per-iteration aggregation-error surrogates fed into the generic bound.
// mse >= bias_sq is NOT asserted: both are upper bounds obtained from
// different inequalities and need not be ordered.
struct ErrorStats {
  Eigen::VectorXd bias_sq;
  Eigen::VectorXd mse;
};

// (1/K) sum_k (h_{k,t} sqrt(p_{k,t})/sqrt(eta_t) - 1)^2 W_k^2 for iteration t
// (1-based).
double aggregation_bias_sq(const PowerSchedule& schedule, const ChannelRealization& channels,
                           const Eigen::VectorXd& model_bound, int t);

// Misalignment sum plus the noise term sigma_z^2 q/(eta_t K^2).
double aggregation_mse(const PowerSchedule& schedule, const ChannelRealization& channels,
                       const Eigen::VectorXd& model_bound, double sigma_z_sq, int model_dim, int t);

// Right side of the optimality-gap bound:
//   prod_t C_t * initial_gap
//   + sum_t J_t (gamma_{t-1} Omega B + gamma_{t-1}^2 Omega^2 V)
//   + sum_t (J_t/2) (bias_sq_t/gamma_{t-1} + (L^2 gamma_{t-1} Omega + L) mse_t).
double generic_gap_bound(const LearningConstants& consts, const RateSchedule& sched,
                         const SystemConfig& cfg, const ErrorStats& stats);

ErrorStats air_error_stats(const SystemConfig& cfg, const LearningConstants& consts,
                           const PowerSchedule& schedule, const ChannelRealization& channels);

// Gap bound for analog aggregation under the given schedule and channels.
double air_gap_bound(const LearningConstants& consts, const RateSchedule& sched,
                     const SystemConfig& cfg, const PowerSchedule& schedule,
                     const ChannelRealization& channels);

// Gap bound for quantized orthogonal uploads: zero bias and constant
// per-iteration MSE (q_hat/K) sum_k W_k^2.
double oma_gap_bound(const LearningConstants& consts, const RateSchedule& sched,
                     const SystemConfig& cfg, double q_hat);

}  // namespace airfed
