#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "airfed/config.hpp"
#include "airfed/errors.hpp"
#include "airfed/harness.hpp"

using airfed::ExperimentConfig;
using airfed::validation_error;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"ini(
[system]
num_devices = 3
model_dim = 6
noise_power_w = 0.5
outer_iters = 4
local_epochs = 2

[schedule]
offset_a = 10
scale_beta = 2

[data]
samples_per_device = 40
minibatch_size = 10
holdout_samples = 30

[latency]
t_max = 40
omega_min = 2
omega_max = 4
)ini";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("test_harness_out") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Parsed CSV: one comment line, one header line, data rows as strings.
struct CsvFile {
  std::string comment;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<int>(j);
    }
    FAIL("no column named ", name);
    return -1;
  }
  double value(int row, const std::string& name) const {
    return std::stod(rows[row][column(name)]);
  }
};

CsvFile read_csv(const fs::path& path) {
  CsvFile out;
  std::istringstream in(slurp(path));
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line.rfind("# ", 0) == 0);
  out.comment = line.substr(2);
  REQUIRE(std::getline(in, line));
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  out.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) out.rows.push_back(split(line));
  }
  return out;
}

int count_files(const fs::path& dir, const std::string& prefix) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().filename().string().rfind(prefix, 0) == 0) ++n;
  }
  return n;
}

bool identical_trees(const fs::path& a, const fs::path& b) {
  std::map<std::string, std::string> lhs, rhs;
  for (const auto& entry : fs::directory_iterator(a)) {
    lhs[entry.path().filename().string()] = slurp(entry.path());
  }
  for (const auto& entry : fs::directory_iterator(b)) {
    rhs[entry.path().filename().string()] = slurp(entry.path());
  }
  return lhs == rhs;
}

#ifdef AIRFED_BIN
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(AIRFED_BIN) + " " + args + " > " + log.string() +
                          " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}
#endif

}  // namespace

TEST_CASE("seed lists parse ranges and reject duplicates") {
  using airfed::parse_seed_list;
  CHECK(parse_seed_list("0,3,8-11") ==
        std::vector<std::uint64_t>{0, 3, 8, 9, 10, 11});
  CHECK(parse_seed_list("42") == std::vector<std::uint64_t>{42});
  CHECK(parse_seed_list("5-5") == std::vector<std::uint64_t>{5});
  CHECK(parse_seed_list("7,1") == std::vector<std::uint64_t>{7, 1});

  CHECK_THROWS_AS(parse_seed_list("1,1"), validation_error);
  CHECK_THROWS_AS(parse_seed_list("2-4,3"), validation_error);
  CHECK_THROWS_AS(parse_seed_list("4-2"), validation_error);
  CHECK_THROWS_AS(parse_seed_list(""), validation_error);
  CHECK_THROWS_AS(parse_seed_list("1,,2"), validation_error);
  CHECK_THROWS_AS(parse_seed_list("abc"), validation_error);
  CHECK_THROWS_AS(parse_seed_list("1x"), validation_error);
  CHECK_THROWS_AS(parse_seed_list("-3"), validation_error);
}

TEST_CASE("config parsing: defaults, overrides, and rejection of junk") {
  SUBCASE("empty text yields the reference defaults") {
    const ExperimentConfig cfg = airfed::parse_config("");
    CHECK(cfg.system.num_devices == 10);
    CHECK(cfg.system.model_dim == 20);
    CHECK(cfg.system.noise_power_w == 1.0);
    CHECK(cfg.system.outer_iters == 50);
    CHECK(cfg.system.local_epochs == 5);
    CHECK(cfg.system.max_power_tilde_w.size() == 10);
    CHECK((cfg.system.max_power_tilde_w.array() == 5.0).all());
    CHECK((cfg.system.ave_power_tilde_w.array() == 1.0).all());
    CHECK(cfg.schedule.offset_a == 10.0);
    CHECK(cfg.schedule.scale_beta == 1.0);
    CHECK(cfg.timing.quant_levels == 10);
    CHECK(cfg.timing.minibatch == 500);
    CHECK(cfg.minibatch_size == 500);
    CHECK(cfg.config_hash == airfed::fnv1a_hex(""));
  }

  SUBCASE("comments and blank lines are ignored") {
    const ExperimentConfig cfg = airfed::parse_config(
        "# leading comment\n\n[system]\n; semicolon comment\nnum_devices = 4\n");
    CHECK(cfg.system.num_devices == 4);
  }

  SUBCASE("changing num_devices re-broadcasts every per-device budget") {
    const ExperimentConfig cfg = airfed::parse_config("[system]\nnum_devices = 4\n");
    CHECK(cfg.system.max_power_tilde_w.size() == 4);
    CHECK(cfg.system.ave_power_tilde_w.size() == 4);
    CHECK(cfg.oma_max_power_w.size() == 4);
    CHECK(cfg.oma_ave_power_w.size() == 4);
    CHECK((cfg.system.max_power_tilde_w.array() == 5.0).all());
    CHECK((cfg.oma_ave_power_w.array() == 1.0).all());
  }

  SUBCASE("vector keys accept a scalar broadcast or a full list") {
    const ExperimentConfig scalar = airfed::parse_config(
        "[system]\nnum_devices = 4\nmax_power_tilde_w = 2.5\n");
    CHECK(scalar.system.max_power_tilde_w.size() == 4);
    CHECK((scalar.system.max_power_tilde_w.array() == 2.5).all());

    const ExperimentConfig list = airfed::parse_config(
        "[system]\nnum_devices = 3\nmax_power_tilde_w = 2,3,4\n");
    CHECK(list.system.max_power_tilde_w(0) == 2.0);
    CHECK(list.system.max_power_tilde_w(1) == 3.0);
    CHECK(list.system.max_power_tilde_w(2) == 4.0);

    CHECK_THROWS_AS(
        airfed::parse_config("[system]\nnum_devices = 3\nmax_power_tilde_w = 2,3\n"),
        validation_error);
  }

  SUBCASE("minibatch override propagates into the timing model") {
    const ExperimentConfig cfg = airfed::parse_config("[data]\nminibatch_size = 100\n");
    CHECK(cfg.minibatch_size == 100);
    CHECK(cfg.timing.minibatch == 100);
  }

  SUBCASE("unknown structure is rejected") {
    CHECK_THROWS_WITH_AS(airfed::parse_config("[mystery]\nx = 1\n"),
                         doctest::Contains("unknown section"), validation_error);
    CHECK_THROWS_WITH_AS(airfed::parse_config("[system]\nnum_device = 4\n"),
                         doctest::Contains("unknown key"), validation_error);
    CHECK_THROWS_WITH_AS(airfed::parse_config("[system]\nnum_devices = 4\nnum_devices = 5\n"),
                         doctest::Contains("duplicate key"), validation_error);
    CHECK_THROWS_AS(airfed::parse_config("num_devices = 4\n"), validation_error);
    CHECK_THROWS_AS(airfed::parse_config("[system\nnum_devices = 4\n"), validation_error);
    CHECK_THROWS_AS(airfed::parse_config("[system]\nnum_devices = four\n"),
                    validation_error);
    CHECK_THROWS_AS(airfed::parse_config("[system]\nnum_devices\n"), validation_error);
    CHECK_THROWS_AS(airfed::parse_config("[data]\nminibatch_size = 2000\n"),
                    validation_error);
  }

  SUBCASE("hash identities") {
    CHECK(airfed::fnv1a_hex("") == "cbf29ce484222325");
    CHECK(airfed::fnv1a_hex("a") == "af63dc4c8601ec8c");
    const std::string text = "[system]\nnum_devices = 4\n";
    CHECK(airfed::parse_config(text).config_hash == airfed::fnv1a_hex(text));
  }

  SUBCASE("the shipped reference config loads and hashes its own bytes") {
    const fs::path path = fs::path(SOURCE_DIR) / "configs" / "default.ini";
    const ExperimentConfig cfg = airfed::load_config(path.string());
    CHECK(cfg.system.num_devices == 10);
    CHECK(cfg.config_hash == airfed::fnv1a_hex(slurp(path)));
    CHECK_THROWS_AS(airfed::load_config("no_such_file.ini"), validation_error);
  }
}

TEST_CASE("per-seed inputs are deterministic in the seed") {
  const ExperimentConfig cfg = airfed::parse_config(kSmallConfig);
  const airfed::SeedInputs a = airfed::make_seed_inputs(cfg, 11, 5);
  const airfed::SeedInputs b = airfed::make_seed_inputs(cfg, 11, 5);
  const airfed::SeedInputs c = airfed::make_seed_inputs(cfg, 12, 5);

  CHECK((a.train.features.array() == b.train.features.array()).all());
  CHECK((a.train.labels.array() == b.train.labels.array()).all());
  CHECK((a.channels.h.array() == b.channels.h.array()).all());
  CHECK(a.constants.smoothness_l == b.constants.smoothness_l);
  CHECK(!(a.train.features.array() == c.train.features.array()).all());

  CHECK(a.train.num_devices() == 3);
  CHECK(a.train.shard_size() == 40);
  CHECK(a.holdout.num_samples() == 30);
  CHECK(a.holdout.num_devices() == 1);
  CHECK(a.channels.h.rows() == 3);
  CHECK(a.channels.h.cols() == 5);
  CHECK(a.constants.smoothness_l > 0.0);
  CHECK(a.constants.pl_constant_mu > 0.0);
  CHECK(a.constants.initial_gap > 0.0);
}

TEST_CASE("optimize-power command writes schedules, traces, and a summary") {
  const ExperimentConfig cfg = airfed::parse_config(kSmallConfig);
  const fs::path dir = fresh_dir("opt_a");
  airfed::cmd_optimize_power(cfg, dir.string(), {1, 2});

  for (std::uint64_t seed : {1, 2}) {
    for (const char* stem : {"powers_optimized", "powers_fixed", "powers_msemin",
                             "denoise_optimized", "denoise_fixed", "denoise_msemin",
                             "objective_optimized"}) {
      const fs::path file = dir / (std::string(stem) + "_seed" + std::to_string(seed) + ".csv");
      CHECK(fs::exists(file));
    }
  }

  const CsvFile summary = read_csv(dir / "power_summary.csv");
  CHECK(summary.comment == "config_hash=" + cfg.config_hash);
  CHECK(summary.header ==
        std::vector<std::string>{"seed", "policy", "objective", "gap_bound", "alt_rounds",
                                 "converged"});
  REQUIRE(summary.rows.size() == 6);

  // the bound-minimizing schedule must not lose to either baseline
  for (int base = 0; base < 6; base += 3) {
    CHECK(summary.rows[base][1] == "optimized");
    const double opt = summary.value(base, "objective");
    CHECK(opt <= summary.value(base + 1, "objective") * (1.0 + 1e-9));
    CHECK(opt <= summary.value(base + 2, "objective") * (1.0 + 1e-9));
  }

  const CsvFile trace = read_csv(dir / "objective_optimized_seed1.csv");
  CHECK(trace.comment == "config_hash=" + cfg.config_hash + " seed=1");
  REQUIRE(trace.rows.size() >= 1);
  double prev = trace.value(0, "objective");
  for (std::size_t r = 1; r < trace.rows.size(); ++r) {
    const double next = trace.value(static_cast<int>(r), "objective");
    CHECK(next <= prev + 1e-7 * (1.0 + std::abs(prev)));
    prev = next;
  }

  const fs::path dir2 = fresh_dir("opt_b");
  airfed::cmd_optimize_power(cfg, dir2.string(), {1, 2});
  CHECK(identical_trees(dir, dir2));
}

TEST_CASE("train command writes one trace per policy per seed") {
  const ExperimentConfig cfg = airfed::parse_config(kSmallConfig);
  const fs::path dir = fresh_dir("train_a");
  airfed::cmd_train(cfg, dir.string(), {3, 4});

  for (const char* policy :
       {"air_optimized", "air_fixed", "air_msemin", "oma", "ideal"}) {
    CHECK(count_files(dir, std::string("trace_") + policy + "_seed") == 2);
  }

  const CsvFile trace = read_csv(dir / "trace_ideal_seed3.csv");
  CHECK(trace.comment == "config_hash=" + cfg.config_hash + " seed=3");
  REQUIRE(trace.rows.size() == 5);  // T + 1 rows
  CHECK(trace.value(0, "iter") == 0.0);
  CHECK(trace.value(4, "iter") == 4.0);
  CHECK(trace.value(4, "gap") < trace.value(0, "gap"));
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    CHECK(trace.value(static_cast<int>(i), "agg_err_sq") == 0.0);
    CHECK(trace.value(static_cast<int>(i), "energy_dev0") == 0.0);
  }

  const CsvFile air = read_csv(dir / "trace_air_optimized_seed3.csv");
  CHECK(air.header.size() == 6 + 3);  // metrics plus one energy column per device
  CHECK(air.value(1, "energy_dev0") > 0.0);

  const CsvFile summary = read_csv(dir / "train_summary.csv");
  REQUIRE(summary.rows.size() == 10);
  CHECK(summary.rows[0][0] == "3");
  CHECK(summary.rows[5][0] == "4");

  const fs::path dir2 = fresh_dir("train_b");
  airfed::cmd_train(cfg, dir2.string(), {3, 4});
  CHECK(identical_trees(dir, dir2));
}

TEST_CASE("latency command reports plans for both upload modes") {
  const ExperimentConfig cfg = airfed::parse_config(kSmallConfig);
  const fs::path dir = fresh_dir("latency_a");
  // a generous target is met by the shortest possible horizon
  airfed::cmd_latency(cfg, dir.string(), {5}, 1e6);

  for (const char* stem : {"latency_air_powers_seed5.csv", "latency_air_denoise_seed5.csv",
                           "latency_oma_tau_seed5.csv", "latency_oma_powers_seed5.csv"}) {
    CHECK(fs::exists(dir / stem));
  }

  const CsvFile summary = read_csv(dir / "latency_summary.csv");
  REQUIRE(summary.rows.size() == 2);
  CHECK(summary.rows[0][1] == "air");
  CHECK(summary.rows[1][1] == "oma");
  for (int r = 0; r < 2; ++r) {
    CHECK(summary.value(r, "outer_iters") == 1.0);
    CHECK(summary.value(r, "achieved_bound") <= 1e6);
    CHECK(summary.value(r, "total_latency_s") > 0.0);
    CHECK(summary.value(r, "round_comp_s") > 0.0);
  }
  // model_dim = 6 fits one 14-symbol block: one slot per analog round
  CHECK(summary.value(0, "round_comm_s") == doctest::Approx(1e-3).epsilon(1e-12));

  CHECK_THROWS_AS(airfed::cmd_latency(cfg, dir.string(), {5}, -1.0), validation_error);
  CHECK_THROWS_AS(airfed::cmd_latency(cfg, dir.string(), {5}, 1e-12),
                  airfed::infeasible_error);
}

TEST_CASE("bound command sweeps horizons and local epochs") {
  std::string text = kSmallConfig;
  text += "\n[optimizer]\nmax_alt_rounds = 60\n";
  const ExperimentConfig cfg = airfed::parse_config(text);
  const fs::path dir = fresh_dir("bound_a");
  airfed::cmd_bound(cfg, dir.string(), {6});

  const CsvFile weights = read_csv(dir / "bound_weights_seed6.csv");
  REQUIRE(weights.rows.size() == 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(weights.value(t, "step_size") > 0.0);
    CHECK(weights.value(t, "contraction") > 0.0);
    CHECK(weights.value(t, "contraction") <= 1.0);
    if (t > 0) {
      CHECK(weights.value(t, "step_size") < weights.value(t - 1, "step_size"));
      CHECK(weights.value(t, "persistence") >= weights.value(t - 1, "persistence"));
    }
  }
  CHECK(weights.value(3, "persistence") == 1.0);

  const CsvFile sweep = read_csv(dir / "bound_vs_iters_seed6.csv");
  REQUIRE(sweep.rows.size() == 40);
  double best_air = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const double v = sweep.value(static_cast<int>(i), "air_bound_optimized");
    CHECK(v > 0.0);
    best_air = std::min(best_air, v);
  }
  const CsvFile summary = read_csv(dir / "bound_summary.csv");
  REQUIRE(summary.rows.size() == 1);
  CHECK(summary.value(0, "best_air_bound") == doctest::Approx(best_air).epsilon(1e-15));

  const CsvFile epochs = read_csv(dir / "bound_vs_epochs_seed6.csv");
  CHECK(epochs.rows.size() >= 1);
  for (std::size_t i = 0; i < epochs.rows.size(); ++i) {
    CHECK(epochs.value(static_cast<int>(i), "air_bound_optimized") > 0.0);
    CHECK(epochs.value(static_cast<int>(i), "oma_bound") > 0.0);
  }
}

#ifdef AIRFED_BIN
TEST_CASE("command line drives the pipeline with documented exit codes") {
  const fs::path dir = fresh_dir("cli");
  const fs::path config = dir / "small.ini";
  {
    std::ofstream out(config, std::ios::binary);
    out << kSmallConfig;
  }

  SUBCASE("successful optimize-power run exits 0") {
    const int code = run_cli("optimize-power --config " + config.string() + " --out " +
                                 (dir / "out_ok").string() + " --seeds 0",
                             dir / "ok.log");
    CHECK(code == 0);
    CHECK(fs::exists(dir / "out_ok" / "power_summary.csv"));
  }

  SUBCASE("validation problems exit 1") {
    const fs::path bad = dir / "bad.ini";
    {
      std::ofstream out(bad, std::ios::binary);
      out << "[system]\nnum_devices = 0\n";
    }
    const int code = run_cli("optimize-power --config " + bad.string() + " --out " +
                                 (dir / "out_bad").string() + " --seeds 0",
                             dir / "bad.log");
    CHECK(code == 1);

    const int dup = run_cli("optimize-power --config " + config.string() + " --out " +
                                (dir / "out_dup").string() + " --seeds 1,1",
                            dir / "dup.log");
    CHECK(dup == 1);
  }

  SUBCASE("unreachable latency targets exit 2 and report the best achievable") {
    const int code = run_cli("latency --config " + config.string() + " --out " +
                                 (dir / "out_inf").string() +
                                 " --seeds 0 --target-gap 1e-12",
                             dir / "inf.log");
    CHECK(code == 2);
    const std::string log = slurp(dir / "inf.log");
    CHECK(log.find("best achievable") != std::string::npos);
  }

  SUBCASE("missing required flags are a usage error") {
    const int code = run_cli("latency --config " + config.string() + " --out " +
                                 (dir / "out_flag").string() + " --seeds 0",
                             dir / "flag.log");
    CHECK(code != 0);
  }
}
#endif
