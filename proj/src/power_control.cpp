#include "airfed/power_control.hpp"

#include <cmath>

#include "airfed/errors.hpp"
#include "airfed/numeric.hpp"

namespace airfed {

namespace {

constexpr int kMaxBisectIters = 400;
constexpr double kLambdaHardCap = 1e290;

void check_problem_shapes(const P11Coefficients& coeffs, const ChannelRealization& channels,
                          const PowerBudgets& budgets) {
  channels.validate();
  if (coeffs.iters() != channels.iters() || coeffs.devices() != channels.devices()) {
    throw validation_error("power_control: coefficient and channel shapes must match");
  }
  if (coeffs.b.size() != coeffs.a.size()) {
    throw validation_error("power_control: a and b must have equal length");
  }
  if (budgets.max_tilde.size() != coeffs.devices() ||
      budgets.ave_tilde.size() != coeffs.devices()) {
    throw validation_error("power_control: budget vectors must be length K");
  }
  for (int k = 0; k < coeffs.devices(); ++k) {
    if (!(budgets.ave_tilde[k] > 0.0) || budgets.max_tilde[k] < budgets.ave_tilde[k]) {
      throw validation_error("power_control: budgets require 0 < P_ave_k <= P_max_k");
    }
  }
}

// Amplitudes for one device at a given multiplier.  With h = 0 the
// misalignment term is constant in p, so no power is spent.
void device_amplitudes(const P11Coefficients& coeffs, const ChannelRealization& channels,
                       const Eigen::VectorXd& eta, int k, double lambda, double cap_amp,
                       Eigen::VectorXd& out) {
  const int T = coeffs.iters();
  for (int t = 0; t < T; ++t) {
    double h = channels.h(k, t);
    if (h <= 0.0) {
      out[t] = 0.0;
      continue;
    }
    double reg = eta[t] * lambda / (coeffs.a[t] * coeffs.c[k] * T);
    out[t] = std::min(h * std::sqrt(eta[t]) / (h * h + reg), cap_amp);
  }
}

}  // namespace

void OptimizerSettings::validate() const {
  if (!(convergence_tol > 0.0) || max_alt_rounds < 1 || !(dual_tol > 0.0) ||
      !(dual_lambda_max > 0.0)) {
    throw validation_error("OptimizerSettings: all fields must be positive");
  }
}

double p11_objective(const P11Coefficients& coeffs, const PowerSchedule& schedule,
                     const ChannelRealization& channels) {
  schedule.validate();
  if (schedule.iters() != coeffs.iters() || schedule.devices() != coeffs.devices() ||
      channels.iters() != coeffs.iters() || channels.devices() != coeffs.devices()) {
    throw validation_error("p11_objective: shapes must match coefficients");
  }
  const double noise = coeffs.sigma_z_sq * coeffs.model_dim;
  CompensatedSum total;
  for (int t = 0; t < coeffs.iters(); ++t) {
    double inv_sqrt_eta = 1.0 / std::sqrt(schedule.eta[t]);
    double misalign = 0.0;
    for (int k = 0; k < coeffs.devices(); ++k) {
      double m = channels.h(k, t) * std::sqrt(schedule.p(k, t)) * inv_sqrt_eta - 1.0;
      misalign += coeffs.c[k] * m * m;
    }
    total.add(coeffs.a[t] * misalign + coeffs.b[t] * noise / schedule.eta[t]);
  }
  return total.value();
}

double denoise_update(double a_t, double b_t, const Eigen::VectorXd& c,
                      const Eigen::VectorXd& h_col, const Eigen::VectorXd& p_col,
                      double sigma_z_sq, int model_dim) {
  if (c.size() != h_col.size() || c.size() != p_col.size()) {
    throw validation_error("denoise_update: column lengths must match");
  }
  double num = b_t * sigma_z_sq * model_dim;
  double den = 0.0;
  for (int k = 0; k < c.size(); ++k) {
    double hp = h_col[k] * std::sqrt(p_col[k]);
    num += a_t * c[k] * h_col[k] * h_col[k] * p_col[k];
    den += a_t * c[k] * hp;
  }
  if (!(den > 0.0)) {
    throw validation_error("denoise_update: denoising undefined, all effective powers are zero");
  }
  double root = num / den;
  return root * root;
}

std::pair<Eigen::MatrixXd, DualSolution> power_update(const P11Coefficients& coeffs,
                                                      const ChannelRealization& channels,
                                                      const Eigen::VectorXd& eta,
                                                      const PowerBudgets& budgets,
                                                      const OptimizerSettings& settings) {
  settings.validate();
  check_problem_shapes(coeffs, channels, budgets);
  if (eta.size() != coeffs.iters() || !(eta.array() > 0.0).all()) {
    throw validation_error("power_update: eta must be length T with positive entries");
  }

  const int K = coeffs.devices();
  const int T = coeffs.iters();
  Eigen::MatrixXd p(K, T);
  DualSolution dual;
  dual.lambda = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd amp(T);

  for (int k = 0; k < K; ++k) {
    const double cap_amp = std::sqrt(budgets.max_tilde[k]);
    const double ave_budget = budgets.ave_tilde[k];
    auto average_power = [&](double lambda) {
      device_amplitudes(coeffs, channels, eta, k, lambda, cap_amp, amp);
      return amp.squaredNorm() / T;
    };

    double lambda = 0.0;
    if (average_power(0.0) > ave_budget + settings.dual_tol) {
      // Bracket: average power is continuous and nonincreasing in lambda and
      // tends to 0, so a feasible upper end always exists.
      double lo = 0.0;
      double hi = settings.dual_lambda_max;
      while (average_power(hi) > ave_budget) {
        hi *= 8.0;
        if (hi > kLambdaHardCap) {
          throw numerical_error("power_update: dual bracket exceeded hard cap");
        }
        lo = hi / 8.0;
      }
      bool met = false;
      for (int it = 0; it < kMaxBisectIters; ++it) {
        double mid = 0.5 * (lo + hi);
        double avg = average_power(mid);
        if (std::abs(avg - ave_budget) <= settings.dual_tol) {
          lambda = mid;
          met = true;
          break;
        }
        (avg > ave_budget ? lo : hi) = mid;
      }
      if (!met) {
        // Fall back to the feasible end of the collapsed bracket.
        lambda = hi;
        if (std::abs(average_power(hi) - ave_budget) > settings.dual_tol) {
          throw numerical_error("power_update: dual bisection failed to meet tolerance");
        }
      }
    }
    device_amplitudes(coeffs, channels, eta, k, lambda, cap_amp, amp);
    dual.lambda[k] = lambda;
    p.row(k) = amp.array().square();
  }
  return {p, dual};
}

OptimizeResult optimize(const P11Coefficients& coeffs, const ChannelRealization& channels,
                        const PowerBudgets& budgets, const OptimizerSettings& settings,
                        const Eigen::MatrixXd* initial_powers) {
  settings.validate();
  check_problem_shapes(coeffs, channels, budgets);
  const int K = coeffs.devices();
  const int T = coeffs.iters();

  PowerSchedule cur;
  cur.eta = Eigen::VectorXd::Ones(T);
  if (initial_powers) {
    if (initial_powers->rows() != K || initial_powers->cols() != T) {
      throw validation_error("optimize: initial_powers must be K x T");
    }
    cur.p = *initial_powers;
    cur.validate_budgets(budgets, settings.dual_tol);
  } else {
    cur.p.resize(K, T);
    for (int k = 0; k < K; ++k) {
      cur.p.row(k).setConstant(std::min(budgets.ave_tilde[k], budgets.max_tilde[k]));
    }
  }

  OptimizeResult result;
  double prev_obj = 0.0;
  for (int round = 1; round <= settings.max_alt_rounds; ++round) {
    for (int t = 0; t < T; ++t) {
      cur.eta[t] = denoise_update(coeffs.a[t], coeffs.b[t], coeffs.c, channels.h.col(t),
                                  cur.p.col(t), coeffs.sigma_z_sq, coeffs.model_dim);
    }
    auto [p_new, dual] = power_update(coeffs, channels, cur.eta, budgets, settings);
    cur.p = p_new;
    result.dual = dual;

    double obj = p11_objective(coeffs, cur, channels);
    result.objective_trace.push_back(obj);
    result.rounds = round;
    if (round >= 2 && relative_change(prev_obj, obj) < settings.convergence_tol) {
      result.converged = true;
      break;
    }
    prev_obj = obj;
  }
  result.schedule = cur;
  return result;
}

PowerSchedule fixed_power_policy(const PowerBudgets& budgets, const ChannelRealization& channels,
                                 const P11Coefficients& coeffs) {
  check_problem_shapes(coeffs, channels, budgets);
  const int T = coeffs.iters();
  PowerSchedule out;
  out.p.resize(coeffs.devices(), T);
  for (int k = 0; k < coeffs.devices(); ++k) out.p.row(k).setConstant(budgets.ave_tilde[k]);
  out.eta.resize(T);
  for (int t = 0; t < T; ++t) {
    out.eta[t] = denoise_update(coeffs.a[t], coeffs.b[t], coeffs.c, channels.h.col(t),
                                out.p.col(t), coeffs.sigma_z_sq, coeffs.model_dim);
  }
  return out;
}

PowerSchedule per_iteration_mse_policy(const ChannelRealization& channels,
                                       const PowerBudgets& budgets, const SystemConfig& cfg,
                                       const Eigen::VectorXd& model_bound,
                                       const OptimizerSettings& settings) {
  settings.validate();
  channels.validate();
  cfg.validate();
  if (channels.devices() != cfg.num_devices || model_bound.size() != cfg.num_devices) {
    throw validation_error("per_iteration_mse_policy: shapes must match config");
  }
  const int K = cfg.num_devices;
  const int T = channels.iters();
  const double noise = cfg.noise_power_w * cfg.model_dim;
  const Eigen::VectorXd weights = model_bound.array().square() / K;  // per-device MSE weights
  const double noise_coeff = 1.0 / (static_cast<double>(K) * K);

  Eigen::VectorXd cap(K);
  for (int k = 0; k < K; ++k) cap[k] = std::min(budgets.ave_tilde[k], budgets.max_tilde[k]);

  PowerSchedule out;
  out.p.resize(K, T);
  out.eta.resize(T);
  Eigen::VectorXd p_col(K);

  for (int t = 0; t < T; ++t) {
    p_col = cap;
    double eta = 0.0;
    auto iteration_mse = [&]() {
      double m = 0.0;
      for (int k = 0; k < K; ++k) {
        double d = channels.h(k, t) * std::sqrt(p_col[k]) / std::sqrt(eta) - 1.0;
        m += weights[k] * d * d;
      }
      return m + noise_coeff * noise / eta;
    };

    double prev = 0.0;
    for (int round = 1; round <= settings.max_alt_rounds; ++round) {
      eta = denoise_update(1.0, noise_coeff, weights, channels.h.col(t), p_col,
                           cfg.noise_power_w, cfg.model_dim);
      for (int k = 0; k < K; ++k) {
        double h = channels.h(k, t);
        p_col[k] = h > 0.0 ? std::min(eta / (h * h), cap[k]) : 0.0;
      }
      double mse = iteration_mse();
      if (round >= 2 && relative_change(prev, mse) < settings.convergence_tol) break;
      prev = mse;
    }
    out.p.col(t) = p_col;
    out.eta[t] = eta;
  }
  return out;
}

}  // namespace airfed
