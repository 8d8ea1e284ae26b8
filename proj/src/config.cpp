#include "airfed/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "airfed/errors.hpp"

namespace airfed {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap parse_ini(const std::string& text) {
  SectionMap sections;
  std::istringstream in(text);
  std::string line;
  std::string current;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw validation_error("config line " + std::to_string(lineno) +
                               ": malformed section header");
      }
      current = trim(t.substr(1, t.size() - 2));
      sections[current];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw validation_error("config line " + std::to_string(lineno) +
                             ": expected key = value");
    }
    if (current.empty()) {
      throw validation_error("config line " + std::to_string(lineno) +
                             ": key outside any [section]");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw validation_error("config line " + std::to_string(lineno) + ": empty key or value");
    }
    if (!sections[current].emplace(key, value).second) {
      throw validation_error("config: duplicate key " + current + "." + key);
    }
  }
  return sections;
}

// Pulls typed values out of one section, tracking which keys were consumed so
// leftovers can be reported as unknown.
class SectionReader {
 public:
  SectionReader(const SectionMap& sections, std::string name) : name_(std::move(name)) {
    auto it = sections.find(name_);
    if (it != sections.end()) entries_ = &it->second;
  }

  const std::string* raw(const std::string& key) {
    if (!entries_) return nullptr;
    auto it = entries_->find(key);
    if (it == entries_->end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  void read(const std::string& key, double& out) {
    if (const std::string* v = raw(key)) out = parse_double(key, *v);
  }
  void read(const std::string& key, int& out) {
    if (const std::string* v = raw(key)) out = parse_int(key, *v);
  }
  void read_vector(const std::string& key, int length, Eigen::VectorXd& out) {
    const std::string* v = raw(key);
    if (!v) return;
    std::vector<double> parts;
    std::stringstream ss(*v);
    std::string cell;
    while (std::getline(ss, cell, ',')) parts.push_back(parse_double(key, trim(cell)));
    if (parts.size() == 1) {
      out = Eigen::VectorXd::Constant(length, parts[0]);
    } else if (static_cast<int>(parts.size()) == length) {
      out = Eigen::Map<Eigen::VectorXd>(parts.data(), length);
    } else {
      throw validation_error("config: " + name_ + "." + key + " needs 1 or " +
                             std::to_string(length) + " comma-separated values");
    }
  }

  void finish() const {
    if (!entries_) return;
    for (const auto& [key, value] : *entries_) {
      if (!used_.count(key)) {
        throw validation_error("config: unknown key " + name_ + "." + key);
      }
    }
  }

 private:
  double parse_double(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw validation_error("config: " + name_ + "." + key + " is not a number: " + v);
    }
  }
  int parse_int(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const long x = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return static_cast<int>(x);
    } catch (const std::exception&) {
      throw validation_error("config: " + name_ + "." + key + " is not an integer: " + v);
    }
  }

  std::string name_;
  const std::map<std::string, std::string>* entries_ = nullptr;
  std::set<std::string> used_;
};

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.system.num_devices = 10;
  cfg.system.model_dim = 20;
  cfg.system.noise_power_w = 1.0;
  cfg.system.max_power_tilde_w = Eigen::VectorXd::Constant(10, 5.0);
  cfg.system.ave_power_tilde_w = Eigen::VectorXd::Constant(10, 1.0);
  cfg.system.outer_iters = 50;
  cfg.system.local_epochs = 5;

  cfg.schedule.offset_a = 10.0;
  cfg.schedule.scale_beta = 1.0;

  cfg.timing.symbols_per_block = 14;
  cfg.timing.slot_duration_s = 1e-3;
  cfg.timing.cycles_per_sample = 3000.0;
  cfg.timing.cpu_freq_hz = 5e9;
  cfg.timing.minibatch = 500;
  cfg.timing.bandwidth_hz = 1e6;
  cfg.timing.quant_levels = 10;
  cfg.timing.norm_bits = 64;

  cfg.oma_max_power_w = Eigen::VectorXd::Constant(10, 5.0);
  cfg.oma_ave_power_w = Eigen::VectorXd::Constant(10, 1.0);
  return cfg;
}

void ExperimentConfig::validate() const {
  system.validate();
  schedule.validate();
  timing.validate();
  optimizer.validate();
  if (samples_per_device < 1) throw validation_error("samples_per_device must be >= 1");
  if (minibatch_size < 1 || minibatch_size > samples_per_device) {
    throw validation_error("minibatch_size must be in [1, samples_per_device]");
  }
  if (!(std::isfinite(label_noise) && label_noise >= 0.0)) {
    throw validation_error("label_noise must be >= 0");
  }
  if (holdout_samples < 1) throw validation_error("holdout_samples must be >= 1");
  if (!(std::isfinite(ridge_coeff) && ridge_coeff >= 0.0)) {
    throw validation_error("ridge_coeff must be >= 0");
  }
  if (!(std::isfinite(model_bound_margin) && model_bound_margin >= 1.0)) {
    throw validation_error("model_bound_margin must be >= 1");
  }
  if (t_max < 1) throw validation_error("t_max must be >= 1");
  if (!(omega_range.lo >= 2 && omega_range.hi >= omega_range.lo)) {
    throw validation_error("need 2 <= omega_min <= omega_max");
  }
  if (timing.minibatch != minibatch_size) {
    throw validation_error("timing minibatch must equal minibatch_size");
  }
  const int num_devices = system.num_devices;
  if (oma_max_power_w.size() != num_devices || oma_ave_power_w.size() != num_devices) {
    throw validation_error("upload power budgets must have one entry per device");
  }
  for (int k = 0; k < num_devices; ++k) {
    if (!(oma_ave_power_w(k) > 0.0 && oma_max_power_w(k) >= oma_ave_power_w(k))) {
      throw validation_error("need 0 < oma_ave_power_w <= oma_max_power_w per device");
    }
  }
}

ExperimentConfig parse_config(const std::string& text) {
  const SectionMap sections = parse_ini(text);
  const std::set<std::string> known = {"system", "schedule", "data",
                                       "timing", "optimizer", "latency"};
  for (const auto& [name, entries] : sections) {
    if (!known.count(name)) throw validation_error("config: unknown section [" + name + "]");
  }

  ExperimentConfig cfg = default_experiment_config();

  SectionReader system(sections, "system");
  system.read("num_devices", cfg.system.num_devices);
  system.read("model_dim", cfg.system.model_dim);
  system.read("noise_power_w", cfg.system.noise_power_w);
  system.read("outer_iters", cfg.system.outer_iters);
  system.read("local_epochs", cfg.system.local_epochs);
  if (cfg.system.num_devices >= 1) {
    // re-broadcast defaults before reading overrides, so K != 10 works
    const double max0 = cfg.system.max_power_tilde_w.size() ? cfg.system.max_power_tilde_w(0) : 5.0;
    const double ave0 = cfg.system.ave_power_tilde_w.size() ? cfg.system.ave_power_tilde_w(0) : 1.0;
    cfg.system.max_power_tilde_w = Eigen::VectorXd::Constant(cfg.system.num_devices, max0);
    cfg.system.ave_power_tilde_w = Eigen::VectorXd::Constant(cfg.system.num_devices, ave0);
    const double omax0 = cfg.oma_max_power_w.size() ? cfg.oma_max_power_w(0) : 5.0;
    const double oave0 = cfg.oma_ave_power_w.size() ? cfg.oma_ave_power_w(0) : 1.0;
    cfg.oma_max_power_w = Eigen::VectorXd::Constant(cfg.system.num_devices, omax0);
    cfg.oma_ave_power_w = Eigen::VectorXd::Constant(cfg.system.num_devices, oave0);
  }
  system.read_vector("max_power_tilde_w", cfg.system.num_devices, cfg.system.max_power_tilde_w);
  system.read_vector("ave_power_tilde_w", cfg.system.num_devices, cfg.system.ave_power_tilde_w);
  system.finish();

  SectionReader schedule(sections, "schedule");
  schedule.read("offset_a", cfg.schedule.offset_a);
  schedule.read("scale_beta", cfg.schedule.scale_beta);
  schedule.finish();

  SectionReader data(sections, "data");
  data.read("samples_per_device", cfg.samples_per_device);
  data.read("minibatch_size", cfg.minibatch_size);
  data.read("label_noise", cfg.label_noise);
  data.read("holdout_samples", cfg.holdout_samples);
  data.read("ridge_coeff", cfg.ridge_coeff);
  data.read("model_bound_margin", cfg.model_bound_margin);
  data.finish();
  cfg.timing.minibatch = cfg.minibatch_size;

  SectionReader timing(sections, "timing");
  timing.read("symbols_per_block", cfg.timing.symbols_per_block);
  timing.read("slot_duration_s", cfg.timing.slot_duration_s);
  timing.read("cycles_per_sample", cfg.timing.cycles_per_sample);
  timing.read("cpu_freq_hz", cfg.timing.cpu_freq_hz);
  timing.read("bandwidth_hz", cfg.timing.bandwidth_hz);
  timing.read("quant_levels", cfg.timing.quant_levels);
  timing.read("norm_bits", cfg.timing.norm_bits);
  timing.finish();

  SectionReader optimizer(sections, "optimizer");
  optimizer.read("convergence_tol", cfg.optimizer.convergence_tol);
  optimizer.read("max_alt_rounds", cfg.optimizer.max_alt_rounds);
  optimizer.read("dual_tol", cfg.optimizer.dual_tol);
  optimizer.read("dual_lambda_max", cfg.optimizer.dual_lambda_max);
  optimizer.finish();

  SectionReader latency(sections, "latency");
  latency.read("t_max", cfg.t_max);
  latency.read("omega_min", cfg.omega_range.lo);
  latency.read("omega_max", cfg.omega_range.hi);
  latency.read_vector("oma_max_power_w", cfg.system.num_devices, cfg.oma_max_power_w);
  latency.read_vector("oma_ave_power_w", cfg.system.num_devices, cfg.oma_ave_power_w);
  latency.finish();

  cfg.config_hash = fnv1a_hex(text);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(out);
}

}  // namespace airfed
