#pragma once

#include <Eigen/Dense>

#include "airfed/dataset.hpp"
#include "airfed/errors.hpp"

namespace airfed {

// System-level dimensions and budgets.  Power budgets are the W_k-normalized
// per-device limits on the power-scaling factors p_{k,t} (peak per iteration
// and average across iterations).
struct SystemConfig {
  int num_devices = 0;                  // K
  int model_dim = 0;                    // q
  double noise_power_w = 0.0;           // sigma_z^2, receiver noise per component
  Eigen::VectorXd max_power_tilde_w;    // length K, peak budget per iteration
  Eigen::VectorXd ave_power_tilde_w;    // length K, budget on (1/T) sum_t p_{k,t}
  int outer_iters = 0;                  // T
  int local_epochs = 0;                 // Omega, >= 2 so the contraction is real

  void validate() const;
};

struct PowerBudgets {
  Eigen::VectorXd max_tilde;
  Eigen::VectorXd ave_tilde;
};

inline PowerBudgets budgets_of(const SystemConfig& cfg) {
  return {cfg.max_power_tilde_w, cfg.ave_power_tilde_w};
}

// Constants of the convergence analysis for the global objective F:
// L-smoothness, PL constant mu, per-device gradient divergence delta_k,
// scaled minibatch-gradient deviation phi_hat_k (the per-iteration variance
// proxy is phi_k^2 = phi_hat_k^2 / n_b), gradient bound G_k, model-norm bound
// W_k, and the optimum F* with the starting gap F(v_0) - F*.
struct LearningConstants {
  double smoothness_l = 0.0;
  double pl_constant_mu = 0.0;
  Eigen::VectorXd grad_divergence;      // delta_k
  Eigen::VectorXd grad_variance_hat;    // phi_hat_k
  int minibatch_size = 0;               // n_b
  Eigen::VectorXd grad_bound;           // G_k
  Eigen::VectorXd model_bound;          // W_k
  double optimum_loss = 0.0;            // F*
  double initial_gap = 0.0;             // F(v_0) - F*

  void validate(int num_devices) const;
};

// Diminishing learning-rate family gamma_t = beta / (t + a).
struct RateSchedule {
  double offset_a = 0.0;
  double scale_beta = 0.0;

  void validate() const;
};

double learning_rate(const RateSchedule& sched, int t);

// Bound preconditions tying the schedule to (mu, L, Omega):
// beta >= 1/(mu*(Omega-1)) and gamma_1 = beta/(1+a) <= 1/(L*Omega).
// Exact-boundary choices are accepted (small relative slack).
void validate_rate_schedule(const RateSchedule& sched, const LearningConstants& consts,
                            int local_epochs);
bool rate_schedule_feasible(const RateSchedule& sched, const LearningConstants& consts,
                            int local_epochs);

// C_t = 1 - (Omega-1)*mu*gamma_t.  Valid configs keep this in (0,1]; a
// non-positive value means the rate is too large for (mu, Omega) and is
// rejected.
double contraction_coeff(const LearningConstants& consts, const RateSchedule& sched,
                         const SystemConfig& cfg, int t);

// C_1..C_T as a vector (index i holds C_{i+1}).
Eigen::VectorXd contraction_coeffs(const LearningConstants& consts, const RateSchedule& sched,
                                   const SystemConfig& cfg);

// Suffix products of the contraction coefficients: entry i holds
// J_{i+1} = prod_{j>i} C_{j+1}, so the last entry is the empty product 1.
// J_t weights how strongly the error of iteration t persists to the end;
// it is nondecreasing in t whenever all C are in (0,1].
Eigen::VectorXd iteration_weights(const Eigen::VectorXd& contraction);

double iteration_weight(const LearningConstants& consts, const RateSchedule& sched,
                        const SystemConfig& cfg, int t);

// B = (1/K) sum_k (delta_k^2 + phi_hat_k^2/n_b) / 2, the gradient
// heterogeneity + minibatch variance constant.
double grad_heterogeneity_B(const LearningConstants& consts, const SystemConfig& cfg);

// V = (L/K) sum_k G_k^2.
double grad_bound_V(const LearningConstants& consts, const SystemConfig& cfg);

// Per-iteration weights of the gap-minimization objective:
//   a_t = J_t/(2*gamma_{t-1}) + J_t*(L + gamma_{t-1}*L^2*Omega)/2
//   b_t = J_t*(L + gamma_{t-1}*L^2*Omega)/(2*K^2)
// and the per-device weights c_k = W_k^2/K.
struct ObjectiveCoeffs {
  double a_t = 0.0;
  double b_t = 0.0;
  Eigen::VectorXd c;
};

// Core arithmetic, parameterized directly so single terms are testable.
std::pair<double, double> objective_coeffs_core(double j_t, double gamma_prev, double smoothness_l,
                                                int local_epochs, int num_devices);

ObjectiveCoeffs objective_coeffs(const LearningConstants& consts, const RateSchedule& sched,
                                 const SystemConfig& cfg, int t);

// All objective weights for t = 1..T plus the noise constants the optimizer
// needs.  a, b are indexed so entry i corresponds to iteration t = i+1 (whose
// learning rate is gamma_i).
struct P11Coefficients {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  double sigma_z_sq = 0.0;
  int model_dim = 0;

  int iters() const { return static_cast<int>(a.size()); }
  int devices() const { return static_cast<int>(c.size()); }
};

P11Coefficients build_p11_coefficients(const LearningConstants& consts, const RateSchedule& sched,
                                       const SystemConfig& cfg);

// Data-driven constants for the synthetic linear-regression task.  L and mu
// are the extreme eigenvalues of X^T X/|D| + 1e-4 I; w* solves the normal
// equations (optionally ridge-regularized, see below); W_k^2 = margin*||w*||^2;
// G_k = 2*W_k*L; delta_k is 1.5x the divergence of shard gradients at w = 0;
// phi_hat_k comes from the exact finite-population variance of size-n_b
// minibatch gradients at w = 0.  Deterministic given the inputs.
//
// ridge_coeff is the coefficient of (1/2)||w||^2 added to the mean squared
// loss when solving for w*.  The default 0 gives plain least squares, which is
// the true minimizer of the loss the simulator trains; a positive value makes
// F* an evaluation of F at the ridge solution (an upper bound on the true
// optimum), so overriding it shifts every reported gap.
LearningConstants estimate_constants_from_data(const SyntheticDataset& dataset, int minibatch_size,
                                               double ridge_coeff = 0.0,
                                               double model_bound_margin = 1.1);

}  // namespace airfed
