#include "airfed/model_constants.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>
#include <vector>

namespace airfed {

namespace {

constexpr double kGramianRidge = 1e-4;     // fixed regularizer on the data Gramian
constexpr double kBoundarySlack = 1e-12;   // accept exact-boundary schedule choices

void require(bool ok, const char* what) {
  if (!ok) throw validation_error(what);
}

}  // namespace

void SystemConfig::validate() const {
  require(num_devices >= 1, "SystemConfig: num_devices must be >= 1");
  require(model_dim >= 1, "SystemConfig: model_dim must be >= 1");
  require(noise_power_w >= 0.0 && std::isfinite(noise_power_w),
          "SystemConfig: noise_power_w must be finite and >= 0");
  require(outer_iters >= 1, "SystemConfig: outer_iters must be >= 1");
  require(local_epochs >= 2, "SystemConfig: local_epochs must be >= 2");
  require(max_power_tilde_w.size() == num_devices,
          "SystemConfig: max_power_tilde_w length must equal num_devices");
  require(ave_power_tilde_w.size() == num_devices,
          "SystemConfig: ave_power_tilde_w length must equal num_devices");
  for (int k = 0; k < num_devices; ++k) {
    require(ave_power_tilde_w[k] > 0.0, "SystemConfig: ave_power_tilde_w entries must be > 0");
    require(max_power_tilde_w[k] >= ave_power_tilde_w[k],
            "SystemConfig: max_power_tilde_w must be >= ave_power_tilde_w per device");
  }
}

void LearningConstants::validate(int num_devices) const {
  require(std::isfinite(smoothness_l) && smoothness_l >= 0.0,
          "LearningConstants: smoothness_l must be finite and >= 0");
  require(std::isfinite(pl_constant_mu) && pl_constant_mu >= 0.0,
          "LearningConstants: pl_constant_mu must be finite and >= 0");
  require(pl_constant_mu <= smoothness_l * (1.0 + kBoundarySlack) + kBoundarySlack,
          "LearningConstants: pl_constant_mu must not exceed smoothness_l");
  require(minibatch_size >= 1, "LearningConstants: minibatch_size must be >= 1");
  require(initial_gap >= 0.0, "LearningConstants: initial_gap must be >= 0");
  auto check_vec = [&](const Eigen::VectorXd& v, const char* what) {
    require(v.size() == num_devices, what);
    require((v.array() >= 0.0).all(), what);
  };
  check_vec(grad_divergence, "LearningConstants: grad_divergence must be length K, nonnegative");
  check_vec(grad_variance_hat,
            "LearningConstants: grad_variance_hat must be length K, nonnegative");
  check_vec(grad_bound, "LearningConstants: grad_bound must be length K, nonnegative");
  check_vec(model_bound, "LearningConstants: model_bound must be length K, nonnegative");
}

void RateSchedule::validate() const {
  require(offset_a > 0.0 && std::isfinite(offset_a), "RateSchedule: offset_a must be > 0");
  require(scale_beta > 0.0 && std::isfinite(scale_beta), "RateSchedule: scale_beta must be > 0");
}

double learning_rate(const RateSchedule& sched, int t) {
  if (t < 0) throw validation_error("learning_rate: iteration index must be >= 0");
  return sched.scale_beta / (t + sched.offset_a);
}

bool rate_schedule_feasible(const RateSchedule& sched, const LearningConstants& consts,
                            int local_epochs) {
  if (local_epochs < 2) return false;
  if (consts.pl_constant_mu <= 0.0) return false;
  double beta_min = 1.0 / (consts.pl_constant_mu * (local_epochs - 1));
  if (sched.scale_beta < beta_min * (1.0 - kBoundarySlack)) return false;
  double gamma1 = sched.scale_beta / (1.0 + sched.offset_a);
  if (consts.smoothness_l > 0.0) {
    double gamma1_max = 1.0 / (consts.smoothness_l * local_epochs);
    if (gamma1 > gamma1_max * (1.0 + kBoundarySlack)) return false;
  }
  return true;
}

void validate_rate_schedule(const RateSchedule& sched, const LearningConstants& consts,
                            int local_epochs) {
  sched.validate();
  require(rate_schedule_feasible(sched, consts, local_epochs),
          "RateSchedule: requires beta >= 1/(mu*(Omega-1)) and beta/(1+a) <= 1/(L*Omega) "
          "with mu > 0 and Omega >= 2");
}

double contraction_coeff(const LearningConstants& consts, const RateSchedule& sched,
                         const SystemConfig& cfg, int t) {
  double gamma_t = learning_rate(sched, t);
  double c = 1.0 - (cfg.local_epochs - 1) * consts.pl_constant_mu * gamma_t;
  if (c <= 0.0) {
    throw validation_error("contraction_coeff: 1 - (Omega-1)*mu*gamma_t <= 0; "
                           "learning rate too large for (mu, Omega)");
  }
  return c;
}

Eigen::VectorXd contraction_coeffs(const LearningConstants& consts, const RateSchedule& sched,
                                   const SystemConfig& cfg) {
  Eigen::VectorXd c(cfg.outer_iters);
  for (int t = 1; t <= cfg.outer_iters; ++t) c[t - 1] = contraction_coeff(consts, sched, cfg, t);
  return c;
}

Eigen::VectorXd iteration_weights(const Eigen::VectorXd& contraction) {
  const auto n = contraction.size();
  Eigen::VectorXd j(n);
  double acc = 1.0;
  for (auto i = n - 1; i >= 0; --i) {
    j[i] = acc;                 // product of C over indices strictly after i
    acc *= contraction[i];
  }
  return j;
}

double iteration_weight(const LearningConstants& consts, const RateSchedule& sched,
                        const SystemConfig& cfg, int t) {
  if (t < 1 || t > cfg.outer_iters) {
    throw validation_error("iteration_weight: t must be in [1, outer_iters]");
  }
  double acc = 1.0;
  for (int i = t + 1; i <= cfg.outer_iters; ++i) acc *= contraction_coeff(consts, sched, cfg, i);
  return acc;
}

double grad_heterogeneity_B(const LearningConstants& consts, const SystemConfig& cfg) {
  double sum = 0.0;
  for (int k = 0; k < cfg.num_devices; ++k) {
    double phi_sq = consts.grad_variance_hat[k] * consts.grad_variance_hat[k] /
                    static_cast<double>(consts.minibatch_size);
    double delta_sq = consts.grad_divergence[k] * consts.grad_divergence[k];
    sum += 0.5 * (delta_sq + phi_sq);
  }
  return sum / cfg.num_devices;
}

double grad_bound_V(const LearningConstants& consts, const SystemConfig& cfg) {
  return consts.smoothness_l * consts.grad_bound.squaredNorm() / cfg.num_devices;
}

std::pair<double, double> objective_coeffs_core(double j_t, double gamma_prev, double smoothness_l,
                                                int local_epochs, int num_devices) {
  double smooth = smoothness_l + gamma_prev * smoothness_l * smoothness_l * local_epochs;
  double a_t = j_t / (2.0 * gamma_prev) + 0.5 * j_t * smooth;
  double b_t = 0.5 * j_t * smooth / (static_cast<double>(num_devices) * num_devices);
  return {a_t, b_t};
}

ObjectiveCoeffs objective_coeffs(const LearningConstants& consts, const RateSchedule& sched,
                                 const SystemConfig& cfg, int t) {
  if (t < 1 || t > cfg.outer_iters) {
    throw validation_error("objective_coeffs: t must be in [1, outer_iters]");
  }
  double j_t = iteration_weight(consts, sched, cfg, t);
  double gamma_prev = learning_rate(sched, t - 1);
  auto [a_t, b_t] =
      objective_coeffs_core(j_t, gamma_prev, consts.smoothness_l, cfg.local_epochs, cfg.num_devices);
  ObjectiveCoeffs out;
  out.a_t = a_t;
  out.b_t = b_t;
  out.c = consts.model_bound.array().square() / cfg.num_devices;
  return out;
}

P11Coefficients build_p11_coefficients(const LearningConstants& consts, const RateSchedule& sched,
                                       const SystemConfig& cfg) {
  cfg.validate();
  consts.validate(cfg.num_devices);
  validate_rate_schedule(sched, consts, cfg.local_epochs);

  const int T = cfg.outer_iters;
  Eigen::VectorXd j = iteration_weights(contraction_coeffs(consts, sched, cfg));
  P11Coefficients out;
  out.a.resize(T);
  out.b.resize(T);
  for (int t = 1; t <= T; ++t) {
    double gamma_prev = learning_rate(sched, t - 1);
    auto [a_t, b_t] = objective_coeffs_core(j[t - 1], gamma_prev, consts.smoothness_l,
                                            cfg.local_epochs, cfg.num_devices);
    out.a[t - 1] = a_t;
    out.b[t - 1] = b_t;
  }
  out.c = consts.model_bound.array().square() / cfg.num_devices;
  out.sigma_z_sq = cfg.noise_power_w;
  out.model_dim = cfg.model_dim;
  return out;
}

void SyntheticDataset::validate() const {
  require(features.rows() == labels.size(),
          "SyntheticDataset: features rows must equal labels length");
  require(!partition.empty(), "SyntheticDataset: partition must be nonempty");
  const auto shard = partition[0].size();
  require(shard > 0, "SyntheticDataset: shards must be nonempty");
  std::vector<char> seen(static_cast<std::size_t>(num_samples()), 0);
  for (const auto& idxs : partition) {
    require(idxs.size() == shard, "SyntheticDataset: shards must have identical size");
    for (int i : idxs) {
      require(i >= 0 && i < num_samples(), "SyntheticDataset: partition index out of range");
      require(!seen[static_cast<std::size_t>(i)], "SyntheticDataset: partition must be disjoint");
      seen[static_cast<std::size_t>(i)] = 1;
    }
  }
  require(shard * partition.size() == static_cast<std::size_t>(num_samples()),
          "SyntheticDataset: partition must cover all samples");
}

LearningConstants estimate_constants_from_data(const SyntheticDataset& dataset, int minibatch_size,
                                               double ridge_coeff, double model_bound_margin) {
  dataset.validate();
  require(minibatch_size >= 1 && minibatch_size <= dataset.shard_size(),
          "estimate_constants_from_data: minibatch_size must be in [1, shard size]");
  require(ridge_coeff >= 0.0, "estimate_constants_from_data: ridge_coeff must be >= 0");
  require(model_bound_margin > 1.0, "estimate_constants_from_data: model_bound_margin must be > 1");

  const auto& x = dataset.features;
  const auto& y = dataset.labels;
  const int n = dataset.num_samples();
  const int q = dataset.dim();
  const int num_dev = dataset.num_devices();
  const int shard = dataset.shard_size();

  Eigen::MatrixXd gram = (x.transpose() * x) / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram +
                                                     kGramianRidge *
                                                         Eigen::MatrixXd::Identity(q, q));
  if (eig.info() != Eigen::Success) {
    throw numerical_error("estimate_constants_from_data: eigendecomposition failed");
  }
  const double mu = eig.eigenvalues().minCoeff();
  const double l = eig.eigenvalues().maxCoeff();

  // Normal equations on the mean loss: (X^T X/|D| + ridge I) w = X^T y/|D|.
  // The unregularized Gramian must be well-conditioned when ridge is 0.
  if (ridge_coeff == 0.0) {
    double unreg_min = mu - kGramianRidge;
    if (unreg_min <= 1e-12 * std::max(1.0, l)) {
      throw validation_error("estimate_constants_from_data: singular Gramian; "
                             "set ridge_coeff > 0 or provide richer data");
    }
  }
  Eigen::MatrixXd lhs = gram + ridge_coeff * Eigen::MatrixXd::Identity(q, q);
  Eigen::VectorXd w_star = lhs.ldlt().solve(x.transpose() * y / n);

  const double f_star = (x * w_star - y).squaredNorm() / (2.0 * n);
  const double f_zero = y.squaredNorm() / (2.0 * n);

  LearningConstants out;
  out.smoothness_l = l;
  out.pl_constant_mu = mu;
  out.minibatch_size = minibatch_size;
  out.optimum_loss = f_star;
  out.initial_gap = std::max(0.0, f_zero - f_star);
  out.model_bound = Eigen::VectorXd::Constant(num_dev, std::sqrt(model_bound_margin) * w_star.norm());
  out.grad_bound = 2.0 * l * out.model_bound;

  // Gradients of the quadratic loss at w = 0 are g_i = -y_i x_i.
  Eigen::VectorXd global_grad = -(x.transpose() * y) / n;
  out.grad_divergence.resize(num_dev);
  out.grad_variance_hat.resize(num_dev);
  for (int k = 0; k < num_dev; ++k) {
    Eigen::VectorXd shard_grad = Eigen::VectorXd::Zero(q);
    for (int i : dataset.partition[k]) shard_grad -= y[i] * x.row(i).transpose();
    shard_grad /= shard;
    out.grad_divergence[k] = 1.5 * (shard_grad - global_grad).norm();

    // Exact second moment of the minibatch-gradient deviation under uniform
    // sampling without replacement:
    //   E||g_batch - grad_k||^2 = (scatter/n_b) * (D-n_b)/(D-1),
    // scaled back by n_b so phi_k^2 = phi_hat_k^2/n_b reproduces it.
    double scatter = 0.0;
    for (int i : dataset.partition[k]) {
      scatter += (-y[i] * x.row(i).transpose() - shard_grad).squaredNorm();
    }
    scatter /= shard;
    double phi_hat_sq = 0.0;
    if (shard > 1) {
      phi_hat_sq = scatter * static_cast<double>(shard - minibatch_size) / (shard - 1);
    }
    out.grad_variance_hat[k] = std::sqrt(std::max(0.0, phi_hat_sq));
  }
  return out;
}

}  // namespace airfed
