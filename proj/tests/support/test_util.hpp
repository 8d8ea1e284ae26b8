#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "airfed/bound.hpp"
#include "airfed/model_constants.hpp"

// Instance generators and small helpers shared by the test binaries.
namespace airfed::testutil {

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

struct PowerInstance {
  P11Coefficients coeffs;
  ChannelRealization channels;
  PowerBudgets budgets;
  Eigen::VectorXd eta;   // a fixed positive denoising vector for subproblem tests
};

// Random power-control instances with channels bounded away from zero so the
// first-order oracle stays well conditioned.  Budgets land on both sides of
// the binding/slack split across draws.
inline PowerInstance random_power_instance(std::mt19937_64& rng, int num_devices, int outer) {
  std::uniform_real_distribution<double> h_dist(0.3, 1.7);
  std::uniform_real_distribution<double> a_dist(0.5, 2.0);
  std::uniform_real_distribution<double> b_dist(0.005, 0.05);
  std::uniform_real_distribution<double> c_dist(0.5, 2.0);
  std::uniform_real_distribution<double> eta_dist(0.5, 2.0);
  std::uniform_real_distribution<double> ave_dist(0.4, 1.5);
  std::uniform_real_distribution<double> head_dist(1.3, 4.0);
  std::uniform_real_distribution<double> noise_dist(0.25, 1.0);

  PowerInstance inst;
  inst.coeffs.a.resize(outer);
  inst.coeffs.b.resize(outer);
  inst.coeffs.c.resize(num_devices);
  inst.eta.resize(outer);
  inst.channels.h.resize(num_devices, outer);
  inst.budgets.max_tilde.resize(num_devices);
  inst.budgets.ave_tilde.resize(num_devices);
  inst.coeffs.sigma_z_sq = noise_dist(rng);
  inst.coeffs.model_dim = 8;

  for (int t = 0; t < outer; ++t) {
    inst.coeffs.a(t) = a_dist(rng);
    inst.coeffs.b(t) = b_dist(rng);
    inst.eta(t) = eta_dist(rng);
    for (int k = 0; k < num_devices; ++k) inst.channels.h(k, t) = h_dist(rng);
  }
  for (int k = 0; k < num_devices; ++k) {
    inst.coeffs.c(k) = c_dist(rng);
    const double ave = ave_dist(rng);
    inst.budgets.ave_tilde(k) = ave;
    inst.budgets.max_tilde(k) = ave * head_dist(rng);
  }
  return inst;
}

// A small fully specified analysis configuration for bound tests; every field
// is explicit so hand arithmetic in the tests has fixed inputs.
struct SmallProblem {
  SystemConfig system;
  LearningConstants constants;
  RateSchedule schedule;
};

inline SmallProblem small_problem(int num_devices, int outer, int local_epochs) {
  SmallProblem prob;
  prob.system.num_devices = num_devices;
  prob.system.model_dim = 4;
  prob.system.noise_power_w = 0.5;
  prob.system.max_power_tilde_w = Eigen::VectorXd::Constant(num_devices, 5.0);
  prob.system.ave_power_tilde_w = Eigen::VectorXd::Constant(num_devices, 1.0);
  prob.system.outer_iters = outer;
  prob.system.local_epochs = local_epochs;

  prob.constants.smoothness_l = 1.0;
  prob.constants.pl_constant_mu = 0.8;
  prob.constants.grad_divergence = Eigen::VectorXd::Constant(num_devices, 0.3);
  prob.constants.grad_variance_hat = Eigen::VectorXd::Constant(num_devices, 0.5);
  prob.constants.minibatch_size = 10;
  prob.constants.grad_bound = Eigen::VectorXd::Constant(num_devices, 2.0);
  prob.constants.model_bound = Eigen::VectorXd::Constant(num_devices, 1.0);
  prob.constants.optimum_loss = 0.0;
  prob.constants.initial_gap = 2.0;

  // beta >= 1/(mu*(Omega-1)) and beta/(1+a) <= 1/(L*Omega) both hold for
  // Omega in {2,...,5} with these values
  prob.schedule.offset_a = 8.0;
  prob.schedule.scale_beta = 1.3;
  return prob;
}

}  // namespace airfed::testutil
