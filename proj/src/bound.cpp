#include "airfed/bound.hpp"

#include <cmath>

#include "airfed/errors.hpp"
#include "airfed/numeric.hpp"

namespace airfed {

void ChannelRealization::validate() const {
  if (h.size() == 0) throw validation_error("ChannelRealization: empty matrix");
  if (!(h.array() >= 0.0).all() || !h.allFinite()) {
    throw validation_error("ChannelRealization: magnitudes must be finite and >= 0");
  }
}

void PowerSchedule::validate() const {
  if (p.size() == 0) throw validation_error("PowerSchedule: empty power matrix");
  if (eta.size() != p.cols()) {
    throw validation_error("PowerSchedule: eta length must equal iteration count");
  }
  if (!(p.array() >= 0.0).all() || !p.allFinite()) {
    throw validation_error("PowerSchedule: powers must be finite and >= 0");
  }
  if (!(eta.array() > 0.0).all() || !eta.allFinite()) {
    throw validation_error("PowerSchedule: eta entries must be finite and > 0");
  }
}

void PowerSchedule::validate_budgets(const PowerBudgets& budgets, double tol) const {
  validate();
  if (budgets.max_tilde.size() != p.rows() || budgets.ave_tilde.size() != p.rows()) {
    throw validation_error("PowerSchedule: budget vectors must be length K");
  }
  for (int k = 0; k < p.rows(); ++k) {
    if (p.row(k).maxCoeff() > budgets.max_tilde[k] + tol) {
      throw validation_error("PowerSchedule: peak power budget violated");
    }
    if (p.row(k).mean() > budgets.ave_tilde[k] + tol) {
      throw validation_error("PowerSchedule: average power budget violated");
    }
  }
}

namespace {

void check_error_iteration(const PowerSchedule& schedule, const ChannelRealization& channels,
                           const Eigen::VectorXd& model_bound, int t) {
  if (t < 1 || t > schedule.iters()) {
    throw validation_error("aggregation error: t must be in [1, T]");
  }
  if (channels.devices() != schedule.devices() || channels.iters() != schedule.iters()) {
    throw validation_error("aggregation error: channel and schedule shapes must match");
  }
  if (model_bound.size() != schedule.devices()) {
    throw validation_error("aggregation error: model_bound must be length K");
  }
  if (!(schedule.eta[t - 1] > 0.0)) {
    throw validation_error("aggregation error: eta_t must be > 0");
  }
}

double misalignment_sum(const PowerSchedule& schedule, const ChannelRealization& channels,
                        const Eigen::VectorXd& model_bound, int t) {
  const int col = t - 1;
  const double inv_sqrt_eta = 1.0 / std::sqrt(schedule.eta[col]);
  double sum = 0.0;
  for (int k = 0; k < schedule.devices(); ++k) {
    double m = channels.h(k, col) * std::sqrt(schedule.p(k, col)) * inv_sqrt_eta - 1.0;
    sum += m * m * model_bound[k] * model_bound[k];
  }
  return sum / schedule.devices();
}

}  // namespace

double aggregation_bias_sq(const PowerSchedule& schedule, const ChannelRealization& channels,
                           const Eigen::VectorXd& model_bound, int t) {
  check_error_iteration(schedule, channels, model_bound, t);
  return misalignment_sum(schedule, channels, model_bound, t);
}

double aggregation_mse(const PowerSchedule& schedule, const ChannelRealization& channels,
                       const Eigen::VectorXd& model_bound, double sigma_z_sq, int model_dim,
                       int t) {
  check_error_iteration(schedule, channels, model_bound, t);
  const int k = schedule.devices();
  double noise = sigma_z_sq * model_dim / (schedule.eta[t - 1] * k * k);
  return misalignment_sum(schedule, channels, model_bound, t) + noise;
}

double generic_gap_bound(const LearningConstants& consts, const RateSchedule& sched,
                         const SystemConfig& cfg, const ErrorStats& stats) {
  cfg.validate();
  consts.validate(cfg.num_devices);
  validate_rate_schedule(sched, consts, cfg.local_epochs);
  const int T = cfg.outer_iters;
  if (stats.bias_sq.size() != T || stats.mse.size() != T) {
    throw validation_error("generic_gap_bound: error stats must have length T");
  }

  const Eigen::VectorXd c = contraction_coeffs(consts, sched, cfg);
  const Eigen::VectorXd j = iteration_weights(c);
  const double b_const = grad_heterogeneity_B(consts, cfg);
  const double v_const = grad_bound_V(consts, cfg);
  const double l = consts.smoothness_l;
  const int omega = cfg.local_epochs;

  CompensatedSum total;
  double contraction = consts.initial_gap;
  for (int t = 1; t <= T; ++t) contraction *= c[t - 1];
  total.add(contraction);
  for (int t = 1; t <= T; ++t) {
    double gamma_prev = learning_rate(sched, t - 1);
    total.add(j[t - 1] * (gamma_prev * omega * b_const +
                          gamma_prev * gamma_prev * omega * omega * v_const));
    total.add(0.5 * j[t - 1] *
              (stats.bias_sq[t - 1] / gamma_prev +
               (l * l * gamma_prev * omega + l) * stats.mse[t - 1]));
  }
  return total.value();
}

ErrorStats air_error_stats(const SystemConfig& cfg, const LearningConstants& consts,
                           const PowerSchedule& schedule, const ChannelRealization& channels) {
  const int T = cfg.outer_iters;
  if (schedule.iters() != T || schedule.devices() != cfg.num_devices) {
    throw validation_error("air_error_stats: schedule shape must match config");
  }
  ErrorStats stats;
  stats.bias_sq.resize(T);
  stats.mse.resize(T);
  for (int t = 1; t <= T; ++t) {
    stats.bias_sq[t - 1] = aggregation_bias_sq(schedule, channels, consts.model_bound, t);
    stats.mse[t - 1] = aggregation_mse(schedule, channels, consts.model_bound, cfg.noise_power_w,
                                       cfg.model_dim, t);
  }
  return stats;
}

double air_gap_bound(const LearningConstants& consts, const RateSchedule& sched,
                     const SystemConfig& cfg, const PowerSchedule& schedule,
                     const ChannelRealization& channels) {
  return generic_gap_bound(consts, sched, cfg,
                           air_error_stats(cfg, consts, schedule, channels));
}

double oma_gap_bound(const LearningConstants& consts, const RateSchedule& sched,
                     const SystemConfig& cfg, double q_hat) {
  if (!(q_hat >= 0.0) || !std::isfinite(q_hat)) {
    throw validation_error("oma_gap_bound: q_hat must be finite and >= 0");
  }
  const int T = cfg.outer_iters;
  double mse = q_hat * consts.model_bound.squaredNorm() / cfg.num_devices;
  ErrorStats stats;
  stats.bias_sq = Eigen::VectorXd::Zero(T);
  stats.mse = Eigen::VectorXd::Constant(T, mse);
  return generic_gap_bound(consts, sched, cfg, stats);
}

}  // namespace airfed
