#include "airfed/latency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "airfed/errors.hpp"

namespace airfed {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr int kDualMaxIters = 400;
constexpr int kNewtonMaxIters = 200;
constexpr double kDualTol = 1e-9;        // watts, on the average-power residual
constexpr double kPowerTol = 1e-12;      // relative, on the inner power solve
constexpr double kLambdaHardCap = 1e290;

void require(bool ok, const std::string& what) {
  if (!ok) throw validation_error(what);
}

// (1 + p g) * log2(1 + p g)^2, the stationarity function of the upload-time
// trade-off; strictly increasing in p for g > 0.
double upload_stationarity(double p, double g) {
  const double u = std::log2(1.0 + p * g);
  return (1.0 + p * g) * u * u;
}

double upload_stationarity_slope(double p, double g) {
  const double u = std::log2(1.0 + p * g);
  return g * u * (u + 2.0 / kLn2);
}

// Solves upload_stationarity(p) = rhs for p in (0, p_max], given
// upload_stationarity(p_max) > rhs > 0.  Newton from the upper end with a
// bisection safeguard; the function is increasing and convex in p.
double solve_upload_power(double rhs, double g, double p_max) {
  double lo = 0.0;
  double hi = p_max;
  double p = p_max;
  const double step_tol = kPowerTol * std::max(1.0, p_max);
  for (int iter = 0; iter < kNewtonMaxIters; ++iter) {
    const double val = upload_stationarity(p, g) - rhs;
    if (val > 0.0) {
      hi = p;
    } else if (val < 0.0) {
      lo = p;
    } else {
      return p;
    }
    const double slope = upload_stationarity_slope(p, g);
    double next = p - val / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - p) <= step_tol) return next;
    p = next;
  }
  return p;
}

// Power profile of one device at dual value lambda: the unconstrained
// stationary point of tau + (lambda/T) p, clipped to the peak budget.
Eigen::VectorXd device_powers_at(double lambda, const Eigen::VectorXd& snr_slopes, double p_max,
                                 double payload, double bandwidth, int outer_iters) {
  const int T = static_cast<int>(snr_slopes.size());
  Eigen::VectorXd p(T);
  for (int t = 0; t < T; ++t) {
    const double g = snr_slopes(t);
    if (lambda <= 0.0) {
      p(t) = p_max;
      continue;
    }
    const double rhs = payload * g * static_cast<double>(outer_iters) / (bandwidth * kLn2 * lambda);
    if (upload_stationarity(p_max, g) <= rhs) {
      p(t) = p_max;
    } else {
      p(t) = solve_upload_power(rhs, g, p_max);
    }
  }
  return p;
}

struct AirCandidate {
  double bound = std::numeric_limits<double>::infinity();
  int local_epochs = 0;
};

}  // namespace

void TimingConfig::validate() const {
  require(symbols_per_block >= 1, "symbols_per_block must be >= 1");
  require(std::isfinite(slot_duration_s) && slot_duration_s > 0.0,
          "slot_duration_s must be positive");
  require(std::isfinite(cycles_per_sample) && cycles_per_sample > 0.0,
          "cycles_per_sample must be positive");
  require(std::isfinite(cpu_freq_hz) && cpu_freq_hz > 0.0, "cpu_freq_hz must be positive");
  require(minibatch >= 1, "minibatch must be >= 1");
  require(std::isfinite(bandwidth_hz) && bandwidth_hz > 0.0, "bandwidth_hz must be positive");
  require(quant_levels >= 2, "quant_levels must be >= 2");
  require(norm_bits >= 0, "norm_bits must be >= 0");
}

double air_round_latency(const TimingConfig& timing, int model_dim) {
  timing.validate();
  require(model_dim >= 1, "model_dim must be >= 1");
  const int blocks = (model_dim + timing.symbols_per_block - 1) / timing.symbols_per_block;
  return static_cast<double>(blocks) * timing.slot_duration_s;
}

double compute_latency(const TimingConfig& timing) {
  timing.validate();
  return timing.cycles_per_sample * static_cast<double>(timing.minibatch) / timing.cpu_freq_hz;
}

Eigen::VectorXd quantize(const Eigen::VectorXd& x, int quant_levels, std::mt19937_64& rng) {
  require(quant_levels >= 2, "quant_levels must be >= 2");
  require(x.allFinite(), "quantizer input must be finite");
  const double norm = x.norm();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  if (norm == 0.0) return out;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double s = static_cast<double>(quant_levels);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double scaled = std::abs(x(i)) * s / norm;
    double level = std::floor(scaled);
    double frac = scaled - level;
    if (level >= s) {
      level = s;
      frac = 0.0;
    }
    // one draw per component regardless of frac, so streams stay aligned
    const double draw = uni(rng);
    if (draw < frac) level += 1.0;
    const double sign = (x(i) > 0.0) ? 1.0 : ((x(i) < 0.0) ? -1.0 : 0.0);
    out(i) = norm * sign * level / s;
  }
  return out;
}

double quantizer_mse_factor(int model_dim, int quant_levels) {
  require(model_dim >= 1, "model_dim must be >= 1");
  require(quant_levels >= 2, "quant_levels must be >= 2");
  const double q = static_cast<double>(model_dim);
  const double s = static_cast<double>(quant_levels);
  return std::min(std::sqrt(q) / s, q / (s * s));
}

std::int64_t payload_bits(int model_dim, int quant_levels, int norm_bits) {
  require(model_dim >= 0, "model_dim must be >= 0");
  require(quant_levels >= 2, "quant_levels must be >= 2");
  require(norm_bits >= 0, "norm_bits must be >= 0");
  int level_bits = 0;
  std::int64_t capacity = 1;
  while (capacity < quant_levels) {
    capacity *= 2;
    ++level_bits;
  }
  return static_cast<std::int64_t>(model_dim) * (1 + level_bits) + norm_bits;
}

double oma_rate(double power_w, double channel, double sigma_z_sq, double bandwidth_hz) {
  require(std::isfinite(power_w) && power_w >= 0.0, "power must be >= 0");
  require(std::isfinite(channel) && channel >= 0.0, "channel must be >= 0");
  require(std::isfinite(sigma_z_sq) && sigma_z_sq > 0.0, "sigma_z_sq must be positive");
  require(std::isfinite(bandwidth_hz) && bandwidth_hz > 0.0, "bandwidth_hz must be positive");
  return bandwidth_hz * std::log2(1.0 + power_w * channel * channel / sigma_z_sq);
}

OmaSchedule solve_oma_schedule(const ChannelRealization& channels, const PowerBudgets& budgets,
                               double sigma_z_sq, const TimingConfig& timing, std::int64_t payload,
                               int outer_iters) {
  channels.validate();
  timing.validate();
  require(std::isfinite(sigma_z_sq) && sigma_z_sq > 0.0, "sigma_z_sq must be positive");
  require(payload >= 1, "payload must be >= 1 bit");
  require(outer_iters >= 1, "outer_iters must be >= 1");
  const int num_devices = static_cast<int>(channels.h.rows());
  require(channels.h.cols() == outer_iters, "channel realization must cover every iteration");
  require(budgets.max_tilde.size() == num_devices && budgets.ave_tilde.size() == num_devices,
          "power budgets must have one entry per device");
  for (int k = 0; k < num_devices; ++k) {
    require(budgets.ave_tilde(k) > 0.0 && budgets.max_tilde(k) >= budgets.ave_tilde(k),
            "need 0 < average budget <= peak budget per device");
  }
  if ((channels.h.array() <= 0.0).any()) {
    throw infeasible_error(
        "a device sees a zero channel gain, so its upload time is unbounded for any power",
        std::numeric_limits<double>::infinity());
  }

  const double bits = static_cast<double>(payload);
  const double bandwidth = timing.bandwidth_hz;
  Eigen::MatrixXd p(num_devices, outer_iters);
  Eigen::MatrixXd tau(num_devices, outer_iters);

  for (int k = 0; k < num_devices; ++k) {
    const Eigen::VectorXd snr_slopes =
        channels.h.row(k).transpose().array().square() / sigma_z_sq;
    const double p_max = budgets.max_tilde(k);
    const double p_ave = budgets.ave_tilde(k);

    Eigen::VectorXd pk =
        device_powers_at(0.0, snr_slopes, p_max, bits, bandwidth, outer_iters);
    if (pk.mean() > p_ave + kDualTol) {
      // Average power is continuous and nonincreasing in lambda; bracket then bisect.
      double lo = 0.0;
      double hi = 1.0;
      while (device_powers_at(hi, snr_slopes, p_max, bits, bandwidth, outer_iters).mean() >
             p_ave) {
        lo = hi;
        hi *= 8.0;
        if (hi > kLambdaHardCap) {
          throw numerical_error("average-power multiplier exceeded the bracketing cap");
        }
      }
      for (int iter = 0; iter < kDualMaxIters; ++iter) {
        const double mid = 0.5 * (lo + hi);
        pk = device_powers_at(mid, snr_slopes, p_max, bits, bandwidth, outer_iters);
        const double avg = pk.mean();
        if (std::abs(avg - p_ave) <= kDualTol) {
          lo = hi = mid;
          break;
        }
        (avg > p_ave ? lo : hi) = mid;
      }
      if (lo != hi) {
        // settle on the feasible side of the bracket
        pk = device_powers_at(hi, snr_slopes, p_max, bits, bandwidth, outer_iters);
      }
    }

    for (int t = 0; t < outer_iters; ++t) {
      const double rate = oma_rate(pk(t), channels.h(k, t), sigma_z_sq, bandwidth);
      require(rate > 0.0, "upload rate collapsed to zero");
      p(k, t) = pk(t);
      tau(k, t) = bits / rate;
    }
  }

  OmaSchedule schedule;
  schedule.p = std::move(p);
  schedule.tau = std::move(tau);
  schedule.total_comm_s = schedule.tau.sum();
  return schedule;
}

LatencyPlan solve_air_latency(const LearningConstants& consts, const RateSchedule& sched,
                              const SystemConfig& cfg, const ChannelRealization& channels,
                              const TimingConfig& timing, double target_gap, int t_max,
                              IntRange omega_range, const OptimizerSettings& settings) {
  cfg.validate();
  consts.validate(cfg.num_devices);
  sched.validate();
  channels.validate();
  timing.validate();
  settings.validate();
  // +infinity is a legal vacuous target; only NaN and nonpositive are rejected
  require(!std::isnan(target_gap) && target_gap > 0.0, "target_gap must be positive");
  require(t_max >= 1, "t_max must be >= 1");
  require(omega_range.lo >= 2 && omega_range.hi >= omega_range.lo,
          "local-epoch range must satisfy 2 <= lo <= hi");
  require(channels.h.rows() == cfg.num_devices, "channels must have one row per device");
  require(channels.h.cols() >= t_max, "channels must cover t_max iterations");

  std::vector<int> omegas;
  for (int omega = omega_range.lo; omega <= omega_range.hi; ++omega) {
    if (rate_schedule_feasible(sched, consts, omega)) omegas.push_back(omega);
  }
  require(!omegas.empty(),
          "no local-epoch count in the range satisfies the step-size preconditions");

  const PowerBudgets budgets = budgets_of(cfg);
  std::map<int, AirCandidate> cache;
  double best_anywhere = std::numeric_limits<double>::infinity();

  auto evaluate = [&](int outer) -> const AirCandidate& {
    auto it = cache.find(outer);
    if (it != cache.end()) return it->second;
    AirCandidate cand;
    for (int omega : omegas) {
      SystemConfig trial = cfg;
      trial.outer_iters = outer;
      trial.local_epochs = omega;
      const P11Coefficients coeffs = build_p11_coefficients(consts, sched, trial);
      const ChannelRealization trial_channels{channels.h.leftCols(outer)};
      const OptimizeResult res = optimize(coeffs, trial_channels, budgets, settings);
      const double bound = air_gap_bound(consts, sched, trial, res.schedule, trial_channels);
      if (bound < cand.bound) {
        cand.bound = bound;
        cand.local_epochs = omega;
      }
    }
    best_anywhere = std::min(best_anywhere, cand.bound);
    return cache.emplace(outer, cand).first->second;
  };
  auto feasible = [&](int outer) { return evaluate(outer).bound <= target_gap; };

  int chosen = -1;
  if (feasible(t_max)) {
    int lo = 1;
    int hi = t_max;
    while (lo < hi) {
      const int mid = lo + (hi - lo) / 2;
      if (feasible(mid)) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    // the bisection assumed feasibility is monotone in the iteration count;
    // confirm minimality, otherwise rescan from the bottom
    if (lo == 1 || !feasible(lo - 1)) chosen = lo;
  }
  if (chosen < 0) {
    for (int outer = 1; outer <= t_max; ++outer) {
      if (feasible(outer)) {
        chosen = outer;
        break;
      }
    }
  }
  if (chosen < 0) {
    throw infeasible_error("no iteration count up to t_max reaches the target gap bound",
                           best_anywhere);
  }

  const AirCandidate& best = cache.at(chosen);
  SystemConfig final_cfg = cfg;
  final_cfg.outer_iters = chosen;
  final_cfg.local_epochs = best.local_epochs;
  const P11Coefficients coeffs = build_p11_coefficients(consts, sched, final_cfg);
  const ChannelRealization final_channels{channels.h.leftCols(chosen)};
  const OptimizeResult res = optimize(coeffs, final_channels, budgets, settings);

  LatencyPlan plan;
  plan.outer_iters = chosen;
  plan.local_epochs = best.local_epochs;
  plan.achieved_bound = best.bound;
  plan.round_comm_s = air_round_latency(timing, cfg.model_dim);
  plan.round_comp_s = compute_latency(timing) * static_cast<double>(best.local_epochs);
  plan.total_latency_s = static_cast<double>(chosen) * (plan.round_comm_s + plan.round_comp_s);
  plan.air_schedule = res.schedule;
  return plan;
}

LatencyPlan solve_oma_latency(const LearningConstants& consts, const RateSchedule& sched,
                              const SystemConfig& cfg, const ChannelRealization& channels,
                              const PowerBudgets& oma_budgets, const TimingConfig& timing,
                              double target_gap, int t_max, IntRange omega_range) {
  cfg.validate();
  consts.validate(cfg.num_devices);
  sched.validate();
  channels.validate();
  timing.validate();
  require(!std::isnan(target_gap) && target_gap > 0.0, "target_gap must be positive");
  require(t_max >= 1, "t_max must be >= 1");
  require(omega_range.lo >= 2 && omega_range.hi >= omega_range.lo,
          "local-epoch range must satisfy 2 <= lo <= hi");
  require(channels.h.rows() == cfg.num_devices, "channels must have one row per device");
  require(channels.h.cols() >= t_max, "channels must cover t_max iterations");

  std::vector<int> omegas;
  for (int omega = omega_range.lo; omega <= omega_range.hi; ++omega) {
    if (rate_schedule_feasible(sched, consts, omega)) omegas.push_back(omega);
  }
  require(!omegas.empty(),
          "no local-epoch count in the range satisfies the step-size preconditions");

  const std::int64_t payload =
      payload_bits(cfg.model_dim, timing.quant_levels, timing.norm_bits);
  const double q_hat = quantizer_mse_factor(cfg.model_dim, timing.quant_levels);
  const double tau_comp = compute_latency(timing);

  bool found = false;
  LatencyPlan plan;
  double best_anywhere = std::numeric_limits<double>::infinity();

  for (int omega : omegas) {
    int needed = -1;
    double bound_at = 0.0;
    for (int outer = 1; outer <= t_max; ++outer) {
      SystemConfig trial = cfg;
      trial.outer_iters = outer;
      trial.local_epochs = omega;
      const double bound = oma_gap_bound(consts, sched, trial, q_hat);
      best_anywhere = std::min(best_anywhere, bound);
      if (bound <= target_gap) {
        needed = outer;
        bound_at = bound;
        break;
      }
    }
    if (needed < 0) continue;

    const ChannelRealization trial_channels{channels.h.leftCols(needed)};
    OmaSchedule schedule = solve_oma_schedule(trial_channels, oma_budgets, cfg.noise_power_w,
                                              timing, payload, needed);
    const double comp_total = static_cast<double>(needed) * tau_comp * static_cast<double>(omega);
    const double total = schedule.total_comm_s + comp_total;
    if (!found || total < plan.total_latency_s) {
      found = true;
      plan.outer_iters = needed;
      plan.local_epochs = omega;
      plan.achieved_bound = bound_at;
      plan.round_comm_s = schedule.total_comm_s / static_cast<double>(needed);
      plan.round_comp_s = tau_comp * static_cast<double>(omega);
      plan.total_latency_s = total;
      plan.oma_schedule = std::move(schedule);
    }
  }

  if (!found) {
    throw infeasible_error("no iteration count up to t_max reaches the target gap bound",
                           best_anywhere);
  }
  return plan;
}

}  // namespace airfed
