#pragma once

#include <Eigen/Dense>
#include <vector>

#include "airfed/bound.hpp"
#include "airfed/model_constants.hpp"

namespace airfed {

struct OptimizerSettings {
  double convergence_tol = 1e-8;   // relative objective change across rounds
  int max_alt_rounds = 200;
  double dual_tol = 1e-9;          // absolute average-power residual, watts
  double dual_lambda_max = 1e3;    // initial bisection upper bracket (widened on demand)

  void validate() const;
};

struct DualSolution {
  Eigen::VectorXd lambda;          // one multiplier per device, >= 0
};

// Objective of the gap-minimization problem over (p, eta):
//   sum_t [ a_t sum_k c_k (h_{k,t} sqrt(p_{k,t})/sqrt(eta_t) - 1)^2
//           + b_t sigma_z^2 q / eta_t ].
double p11_objective(const P11Coefficients& coeffs, const PowerSchedule& schedule,
                     const ChannelRealization& channels);

// Closed-form optimal denoising factor for one iteration given powers:
//   eta* = ((a_t sum_k c_k h^2 p + b_t sigma_z^2 q) / (a_t sum_k c_k h sqrt(p)))^2.
// Column arguments are the K-vectors of iteration t.
double denoise_update(double a_t, double b_t, const Eigen::VectorXd& c,
                      const Eigen::VectorXd& h_col, const Eigen::VectorXd& p_col,
                      double sigma_z_sq, int model_dim);

// Optimal powers for fixed eta via per-device Lagrangian bisection.  The
// amplitude has a regularized channel-inversion form,
//   p_hat = min(h sqrt(eta) / (h^2 + eta*lambda_k/(a_t c_k T)), sqrt(Pmax_k)),
// and the device's multiplier lambda_k is either 0 with the average-power
// constraint slack, or chosen so the constraint is tight within dual_tol.
std::pair<Eigen::MatrixXd, DualSolution> power_update(const P11Coefficients& coeffs,
                                                      const ChannelRealization& channels,
                                                      const Eigen::VectorXd& eta,
                                                      const PowerBudgets& budgets,
                                                      const OptimizerSettings& settings);

struct OptimizeResult {
  PowerSchedule schedule;
  DualSolution dual;
  std::vector<double> objective_trace;   // objective after each alternation round
  int rounds = 0;
  bool converged = false;
};

// Alternating minimization over (eta, p).  Starts from
// p = min(P_ave, P_max) per device unless initial_powers is given.  Each
// half-step is an exact minimizer, so the objective trace is monotone
// nonincreasing; stops when the relative change drops below convergence_tol
// or after max_alt_rounds.
OptimizeResult optimize(const P11Coefficients& coeffs, const ChannelRealization& channels,
                        const PowerBudgets& budgets, const OptimizerSettings& settings,
                        const Eigen::MatrixXd* initial_powers = nullptr);

// Benchmark: constant transmit power p_{k,t} = P_ave_k, denoising factors set
// to the closed-form optimum for those powers.
PowerSchedule fixed_power_policy(const PowerBudgets& budgets, const ChannelRealization& channels,
                                 const P11Coefficients& coeffs);

// Benchmark: per-iteration aggregation-MSE minimization; each iteration t is
// solved in isolation by alternating the per-t closed-form denoiser with
// capped channel inversion, under the per-iteration cap min(P_ave_k, P_max_k).
PowerSchedule per_iteration_mse_policy(const ChannelRealization& channels,
                                       const PowerBudgets& budgets, const SystemConfig& cfg,
                                       const Eigen::VectorXd& model_bound,
                                       const OptimizerSettings& settings);

}  // namespace airfed
