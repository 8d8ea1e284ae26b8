#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "airfed/config.hpp"
#include "airfed/errors.hpp"
#include "airfed/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seeds = "0";
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "experiment config file (INI)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--out", args.out_dir, "output directory, created if missing")->required();
  sub->add_option("--seeds", args.seeds, "seed list, e.g. 0,2,5-8")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and power control for over-the-air federated averaging"};
  app.require_subcommand(1);

  CommonArgs args;
  double target_gap = 0.0;

  CLI::App* optimize = app.add_subcommand(
      "optimize-power", "Bound-minimizing power schedule plus baseline policies");
  CLI::App* train =
      app.add_subcommand("train", "Federated training traces under each aggregation policy");
  CLI::App* latency =
      app.add_subcommand("latency", "Latency-minimal plans reaching a target gap bound");
  CLI::App* bound = app.add_subcommand("bound", "Gap bounds versus the outer-iteration count");
  for (CLI::App* sub : {optimize, train, latency, bound}) add_common(sub, args);
  latency->add_option("--target-gap", target_gap, "gap-bound target the plan must reach")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const airfed::ExperimentConfig cfg = airfed::load_config(args.config_path);
    const std::vector<std::uint64_t> seeds = airfed::parse_seed_list(args.seeds);
    if (optimize->parsed()) {
      airfed::cmd_optimize_power(cfg, args.out_dir, seeds);
    } else if (train->parsed()) {
      airfed::cmd_train(cfg, args.out_dir, seeds);
    } else if (latency->parsed()) {
      airfed::cmd_latency(cfg, args.out_dir, seeds, target_gap);
    } else {
      airfed::cmd_bound(cfg, args.out_dir, seeds);
    }
    return 0;
  } catch (const airfed::infeasible_error& err) {
    std::fprintf(stderr, "infeasible: %s (best achievable: %.17g)\n", err.what(),
                 err.best_achieved());
    return 2;
  } catch (const airfed::numerical_error& err) {
    std::fprintf(stderr, "numerical failure: %s\n", err.what());
    return 3;
  } catch (const airfed::validation_error& err) {
    std::fprintf(stderr, "validation error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
}
