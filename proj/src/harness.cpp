#include "airfed/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "airfed/csv.hpp"
#include "airfed/errors.hpp"
#include "airfed/latency.hpp"
#include "airfed/power_control.hpp"

namespace airfed {

namespace {

struct SeedOutput {
  std::vector<std::pair<std::string, std::string>> files;   // name -> content
  std::vector<std::vector<std::string>> summary_rows;
};

// Runs fn(seed) for every seed on a small pool; results land in seed-list
// order and the first failing seed's exception is rethrown.
template <typename Fn>
std::vector<SeedOutput> run_seed_jobs(const std::vector<std::uint64_t>& seeds, Fn&& fn) {
  const int n = static_cast<int>(seeds.size());
  std::vector<SeedOutput> outputs(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  const unsigned hw = std::thread::hardware_concurrency();
  const int workers = std::min<int>(n, std::max(1u, hw));

  auto work = [&]() {
    for (;;) {
      const int idx = next.fetch_add(1);
      if (idx >= n) return;
      try {
        outputs[idx] = fn(seeds[idx]);
      } catch (...) {
        errors[idx] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (int i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
  return outputs;
}

void write_outputs(const std::string& out_dir, const std::vector<SeedOutput>& outputs,
                   const std::string& summary_name, const std::string& comment,
                   std::vector<std::string> summary_header) {
  std::filesystem::create_directories(out_dir);
  CsvWriter summary(comment, std::move(summary_header));
  for (const auto& out : outputs) {
    for (const auto& [name, content] : out.files) {
      const std::filesystem::path path = std::filesystem::path(out_dir) / name;
      std::ofstream file(path, std::ios::binary);
      if (!file) throw validation_error("cannot write output file: " + path.string());
      file << content;
    }
    for (const auto& row : out.summary_rows) summary.add_row(row);
  }
  summary.write_file((std::filesystem::path(out_dir) / summary_name).string());
}

std::string seed_comment(const ExperimentConfig& cfg, std::uint64_t seed) {
  return "config_hash=" + cfg.config_hash + " seed=" + std::to_string(seed);
}

std::vector<std::string> iter_header(const std::string& first, int iters) {
  std::vector<std::string> header;
  if (!first.empty()) header.push_back(first);
  for (int t = 1; t <= iters; ++t) header.push_back("iter_" + std::to_string(t));
  return header;
}

// Devices along rows, iterations along columns.
std::string device_matrix_csv(const std::string& comment, const Eigen::MatrixXd& m) {
  CsvWriter csv(comment, iter_header("device", static_cast<int>(m.cols())));
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    std::vector<std::string> row;
    row.push_back(csv_num(static_cast<int>(k)));
    for (Eigen::Index t = 0; t < m.cols(); ++t) row.push_back(csv_num(m(k, t)));
    csv.add_row(std::move(row));
  }
  return csv.str();
}

std::string iter_row_csv(const std::string& comment, const Eigen::VectorXd& v) {
  CsvWriter csv(comment, iter_header("", static_cast<int>(v.size())));
  std::vector<std::string> row;
  for (Eigen::Index t = 0; t < v.size(); ++t) row.push_back(csv_num(v(t)));
  csv.add_row(std::move(row));
  return csv.str();
}

std::string trace_csv(const std::string& comment, const TrainingTrace& trace) {
  const int devices = static_cast<int>(trace.device_energy.rows());
  std::vector<std::string> header = {"iter",       "loss",
                                     "gap",        "pred_mse",
                                     "agg_err_sq", "agg_misalign_sq"};
  for (int k = 0; k < devices; ++k) header.push_back("energy_dev" + std::to_string(k));
  CsvWriter csv(comment, std::move(header));
  for (int i = 0; i <= trace.iters(); ++i) {
    std::vector<std::string> row = {csv_num(i),
                                    csv_num(trace.loss(i)),
                                    csv_num(trace.gap(i)),
                                    csv_num(trace.pred_mse(i)),
                                    csv_num(trace.agg_err_sq(i)),
                                    csv_num(trace.agg_misalign_sq(i))};
    for (int k = 0; k < devices; ++k) {
      row.push_back(csv_num(i == 0 ? 0.0 : trace.device_energy(k, i - 1)));
    }
    csv.add_row(std::move(row));
  }
  return csv.str();
}

std::string seed_file(const std::string& stem, std::uint64_t seed) {
  return stem + "_seed" + std::to_string(seed) + ".csv";
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> seen;
  std::stringstream ss(text);
  std::string part;
  auto parse_one = [](const std::string& s) -> std::uint64_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      throw validation_error("bad seed value: " + s);
    }
    if (pos != s.size()) throw validation_error("bad seed value: " + s);
    return v;
  };
  while (std::getline(ss, part, ',')) {
    if (part.empty()) throw validation_error("empty entry in seed list");
    const auto dash = part.find('-');
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;
    if (dash == std::string::npos) {
      lo = hi = parse_one(part);
    } else {
      lo = parse_one(part.substr(0, dash));
      hi = parse_one(part.substr(dash + 1));
      if (hi < lo) throw validation_error("descending seed range: " + part);
    }
    for (std::uint64_t s = lo;; ++s) {
      if (!seen.insert(s).second) throw validation_error("duplicate seed " + std::to_string(s));
      seeds.push_back(s);
      if (s == hi) break;
    }
  }
  if (seeds.empty()) throw validation_error("seed list is empty");
  return seeds;
}

SeedInputs make_seed_inputs(const ExperimentConfig& cfg, std::uint64_t seed, int channel_iters) {
  cfg.validate();
  if (channel_iters < 1) throw validation_error("channel_iters must be >= 1");
  SeedInputs inputs;
  inputs.seed = seed;
  RandomStream stream(seed);
  auto& data_rng = stream.get(RandomStream::Sub::data);
  inputs.train = generate_synthetic_dataset(
      cfg.system.model_dim, cfg.system.num_devices * cfg.samples_per_device,
      cfg.system.num_devices, cfg.label_noise, data_rng);
  inputs.holdout = generate_synthetic_dataset(cfg.system.model_dim, cfg.holdout_samples, 1,
                                              cfg.label_noise, data_rng);
  inputs.constants = estimate_constants_from_data(inputs.train, cfg.minibatch_size,
                                                  cfg.ridge_coeff, cfg.model_bound_margin);
  inputs.channels = sample_channels(cfg.system.num_devices, channel_iters,
                                    stream.get(RandomStream::Sub::channels));
  return inputs;
}

void cmd_optimize_power(const ExperimentConfig& cfg, const std::string& out_dir,
                        const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  auto outputs = run_seed_jobs(seeds, [&](std::uint64_t seed) {
    SeedOutput out;
    const SeedInputs inputs = make_seed_inputs(cfg, seed, cfg.system.outer_iters);
    validate_rate_schedule(cfg.schedule, inputs.constants, cfg.system.local_epochs);
    const P11Coefficients coeffs =
        build_p11_coefficients(inputs.constants, cfg.schedule, cfg.system);
    const PowerBudgets budgets = budgets_of(cfg.system);

    const OptimizeResult res = optimize(coeffs, inputs.channels, budgets, cfg.optimizer);
    const PowerSchedule fixed = fixed_power_policy(budgets, inputs.channels, coeffs);
    const PowerSchedule msemin = per_iteration_mse_policy(
        inputs.channels, budgets, cfg.system, inputs.constants.model_bound, cfg.optimizer);

    const std::string comment = seed_comment(cfg, seed);
    struct Entry {
      const char* name;
      const PowerSchedule* schedule;
      int rounds;
      bool converged;
    };
    {
      CsvWriter trace_csv(comment, {"round", "objective"});
      for (std::size_t r = 0; r < res.objective_trace.size(); ++r) {
        trace_csv.add_row({csv_num(static_cast<int>(r + 1)), csv_num(res.objective_trace[r])});
      }
      out.files.emplace_back(seed_file("objective_optimized", seed), trace_csv.str());
    }

    const Entry entries[] = {{"optimized", &res.schedule, res.rounds, res.converged},
                             {"fixed", &fixed, 0, true},
                             {"msemin", &msemin, 0, true}};
    for (const Entry& e : entries) {
      out.files.emplace_back(seed_file(std::string("powers_") + e.name, seed),
                             device_matrix_csv(comment, e.schedule->p));
      out.files.emplace_back(seed_file(std::string("denoise_") + e.name, seed),
                             iter_row_csv(comment, e.schedule->eta));
      out.summary_rows.push_back(
          {std::to_string(seed), e.name,
           csv_num(p11_objective(coeffs, *e.schedule, inputs.channels)),
           csv_num(air_gap_bound(inputs.constants, cfg.schedule, cfg.system, *e.schedule,
                                 inputs.channels)),
           csv_num(e.rounds), csv_num(e.converged ? 1 : 0)});
    }
    return out;
  });
  write_outputs(out_dir, outputs, "power_summary.csv", "config_hash=" + cfg.config_hash,
                {"seed", "policy", "objective", "gap_bound", "alt_rounds", "converged"});
}

void cmd_train(const ExperimentConfig& cfg, const std::string& out_dir,
               const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  auto outputs = run_seed_jobs(seeds, [&](std::uint64_t seed) {
    SeedOutput out;
    const SeedInputs inputs = make_seed_inputs(cfg, seed, cfg.system.outer_iters);
    validate_rate_schedule(cfg.schedule, inputs.constants, cfg.system.local_epochs);
    const P11Coefficients coeffs =
        build_p11_coefficients(inputs.constants, cfg.schedule, cfg.system);
    const PowerBudgets budgets = budgets_of(cfg.system);

    const OptimizeResult res = optimize(coeffs, inputs.channels, budgets, cfg.optimizer);
    const PowerSchedule fixed = fixed_power_policy(budgets, inputs.channels, coeffs);
    const PowerSchedule msemin = per_iteration_mse_policy(
        inputs.channels, budgets, cfg.system, inputs.constants.model_bound, cfg.optimizer);

    const std::string comment = seed_comment(cfg, seed);
    struct Entry {
      const char* name;
      AggregationMode mode;
      const PowerSchedule* schedule;
    };
    const Entry entries[] = {{"air_optimized", AggregationMode::air, &res.schedule},
                             {"air_fixed", AggregationMode::air, &fixed},
                             {"air_msemin", AggregationMode::air, &msemin},
                             {"oma", AggregationMode::oma, nullptr},
                             {"ideal", AggregationMode::ideal, nullptr}};
    for (const Entry& e : entries) {
      // fresh stream per policy: same seed, so minibatch draws pair up
      RandomStream stream(seed);
      const TrainingTrace trace = run_training(
          cfg.system, cfg.schedule, inputs.train, inputs.holdout,
          inputs.constants.optimum_loss, cfg.minibatch_size, e.mode, e.schedule,
          &inputs.channels, cfg.timing.quant_levels, stream);
      out.files.emplace_back(seed_file(std::string("trace_") + e.name, seed),
                             trace_csv(comment, trace));
      const int last = trace.iters();
      out.summary_rows.push_back(
          {std::to_string(seed), e.name, csv_num(trace.loss(last)), csv_num(trace.gap(last)),
           csv_num(trace.pred_mse(last)),
           csv_num(trace.agg_err_sq.tail(last).mean())});
    }
    return out;
  });
  write_outputs(out_dir, outputs, "train_summary.csv", "config_hash=" + cfg.config_hash,
                {"seed", "policy", "final_loss", "final_gap", "final_pred_mse",
                 "mean_agg_err_sq"});
}

void cmd_latency(const ExperimentConfig& cfg, const std::string& out_dir,
                 const std::vector<std::uint64_t>& seeds, double target_gap) {
  cfg.validate();
  if (!(std::isfinite(target_gap) && target_gap > 0.0)) {
    throw validation_error("target_gap must be positive");
  }
  auto outputs = run_seed_jobs(seeds, [&](std::uint64_t seed) {
    SeedOutput out;
    const SeedInputs inputs = make_seed_inputs(cfg, seed, cfg.t_max);
    const std::string comment = seed_comment(cfg, seed);

    const LatencyPlan air = solve_air_latency(inputs.constants, cfg.schedule, cfg.system,
                                              inputs.channels, cfg.timing, target_gap, cfg.t_max,
                                              cfg.omega_range, cfg.optimizer);
    const PowerBudgets upload_budgets{cfg.oma_max_power_w, cfg.oma_ave_power_w};
    const LatencyPlan oma =
        solve_oma_latency(inputs.constants, cfg.schedule, cfg.system, inputs.channels,
                          upload_budgets, cfg.timing, target_gap, cfg.t_max, cfg.omega_range);

    out.files.emplace_back(seed_file("latency_air_powers", seed),
                           device_matrix_csv(comment, air.air_schedule->p));
    out.files.emplace_back(seed_file("latency_air_denoise", seed),
                           iter_row_csv(comment, air.air_schedule->eta));
    out.files.emplace_back(seed_file("latency_oma_tau", seed),
                           device_matrix_csv(comment, oma.oma_schedule->tau));
    out.files.emplace_back(seed_file("latency_oma_powers", seed),
                           device_matrix_csv(comment, oma.oma_schedule->p));

    auto row = [&](const char* mode, const LatencyPlan& plan) {
      return std::vector<std::string>{
          std::to_string(seed),          mode,
          csv_num(plan.outer_iters),     csv_num(plan.local_epochs),
          csv_num(plan.achieved_bound),  csv_num(plan.total_latency_s),
          csv_num(plan.round_comm_s),    csv_num(plan.round_comp_s)};
    };
    out.summary_rows.push_back(row("air", air));
    out.summary_rows.push_back(row("oma", oma));
    return out;
  });
  write_outputs(out_dir, outputs, "latency_summary.csv", "config_hash=" + cfg.config_hash,
                {"seed", "mode", "outer_iters", "local_epochs", "achieved_bound",
                 "total_latency_s", "round_comm_s", "round_comp_s"});
}

void cmd_bound(const ExperimentConfig& cfg, const std::string& out_dir,
               const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  auto outputs = run_seed_jobs(seeds, [&](std::uint64_t seed) {
    SeedOutput out;
    const SeedInputs inputs = make_seed_inputs(cfg, seed, cfg.t_max);
    validate_rate_schedule(cfg.schedule, inputs.constants, cfg.system.local_epochs);
    const double q_hat =
        quantizer_mse_factor(cfg.system.model_dim, cfg.timing.quant_levels);
    const PowerBudgets budgets = budgets_of(cfg.system);

    CsvWriter csv(seed_comment(cfg, seed),
                  {"outer_iters", "air_bound_optimized", "air_bound_fixed", "oma_bound"});
    double best_air = std::numeric_limits<double>::infinity();
    double best_oma = std::numeric_limits<double>::infinity();
    int best_air_t = 0;
    int best_oma_t = 0;
    for (int outer = 1; outer <= cfg.t_max; ++outer) {
      SystemConfig trial = cfg.system;
      trial.outer_iters = outer;
      const P11Coefficients coeffs =
          build_p11_coefficients(inputs.constants, cfg.schedule, trial);
      const ChannelRealization channels{inputs.channels.h.leftCols(outer)};
      const OptimizeResult res = optimize(coeffs, channels, budgets, cfg.optimizer);
      const double air_opt =
          air_gap_bound(inputs.constants, cfg.schedule, trial, res.schedule, channels);
      const PowerSchedule fixed = fixed_power_policy(budgets, channels, coeffs);
      const double air_fixed =
          air_gap_bound(inputs.constants, cfg.schedule, trial, fixed, channels);
      const double oma = oma_gap_bound(inputs.constants, cfg.schedule, trial, q_hat);
      csv.add_row({csv_num(outer), csv_num(air_opt), csv_num(air_fixed), csv_num(oma)});
      if (air_opt < best_air) {
        best_air = air_opt;
        best_air_t = outer;
      }
      if (oma < best_oma) {
        best_oma = oma;
        best_oma_t = outer;
      }
    }
    out.files.emplace_back(seed_file("bound_vs_iters", seed), csv.str());

    {
      // per-iteration contraction factors and persistence weights at the
      // configured horizon
      CsvWriter weights_csv(seed_comment(cfg, seed),
                            {"iter", "step_size", "contraction", "persistence"});
      for (int t = 1; t <= cfg.system.outer_iters; ++t) {
        weights_csv.add_row(
            {csv_num(t), csv_num(learning_rate(cfg.schedule, t - 1)),
             csv_num(contraction_coeff(inputs.constants, cfg.schedule, cfg.system, t)),
             csv_num(iteration_weight(inputs.constants, cfg.schedule, cfg.system, t))});
      }
      out.files.emplace_back(seed_file("bound_weights", seed), weights_csv.str());
    }

    {
      // local-epoch sweep at the configured horizon; epoch counts whose step
      // sizes violate the bound preconditions are skipped
      CsvWriter epochs_csv(seed_comment(cfg, seed),
                           {"local_epochs", "air_bound_optimized", "oma_bound"});
      for (int omega = cfg.omega_range.lo; omega <= cfg.omega_range.hi; ++omega) {
        if (!rate_schedule_feasible(cfg.schedule, inputs.constants, omega)) continue;
        SystemConfig trial = cfg.system;
        trial.local_epochs = omega;
        const P11Coefficients coeffs =
            build_p11_coefficients(inputs.constants, cfg.schedule, trial);
        const ChannelRealization horizon{inputs.channels.h.leftCols(trial.outer_iters)};
        const OptimizeResult res = optimize(coeffs, horizon, budgets, cfg.optimizer);
        const double air_opt =
            air_gap_bound(inputs.constants, cfg.schedule, trial, res.schedule, horizon);
        const double oma = oma_gap_bound(inputs.constants, cfg.schedule, trial, q_hat);
        epochs_csv.add_row({csv_num(omega), csv_num(air_opt), csv_num(oma)});
      }
      out.files.emplace_back(seed_file("bound_vs_epochs", seed), epochs_csv.str());
    }

    out.summary_rows.push_back({std::to_string(seed), csv_num(best_air_t), csv_num(best_air),
                                csv_num(best_oma_t), csv_num(best_oma)});
    return out;
  });
  write_outputs(out_dir, outputs, "bound_summary.csv", "config_hash=" + cfg.config_hash,
                {"seed", "best_air_iters", "best_air_bound", "best_oma_iters",
                 "best_oma_bound"});
}

}  // namespace airfed
