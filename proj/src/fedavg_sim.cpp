#include "airfed/fedavg_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "airfed/errors.hpp"
#include "airfed/latency.hpp"

namespace airfed {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw validation_error(what);
}

// Minibatch gradient of (1/2n_b) sum (x^T w - y)^2 over the sampled rows.
Eigen::VectorXd minibatch_gradient(const Eigen::VectorXd& model, const SyntheticDataset& dataset,
                                   const std::vector<int>& batch) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.size());
  for (int row : batch) {
    const double residual = dataset.features.row(row).dot(model) - dataset.labels(row);
    grad.noalias() += residual * dataset.features.row(row).transpose();
  }
  return grad / static_cast<double>(batch.size());
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(int model_dim, int total_samples, int num_devices,
                                            double label_noise, std::mt19937_64& rng) {
  require(model_dim >= 5, "model_dim must be >= 5 (labels read entries 1 and 4)");
  require(num_devices >= 1, "num_devices must be >= 1");
  require(total_samples >= num_devices, "need at least one sample per device");
  require(total_samples % num_devices == 0, "total_samples must divide evenly across devices");
  require(std::isfinite(label_noise) && label_noise >= 0.0, "label_noise must be >= 0");

  SyntheticDataset data;
  data.features.resize(total_samples, model_dim);
  data.labels.resize(total_samples);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < total_samples; ++i) {
    for (int j = 0; j < model_dim; ++j) data.features(i, j) = normal(rng);
  }
  for (int i = 0; i < total_samples; ++i) {
    data.labels(i) =
        data.features(i, 1) + 3.0 * data.features(i, 4) + label_noise * normal(rng);
  }

  const int shard = total_samples / num_devices;
  data.partition.resize(num_devices);
  for (int k = 0; k < num_devices; ++k) {
    data.partition[k].resize(shard);
    for (int i = 0; i < shard; ++i) data.partition[k][i] = k * shard + i;
  }
  data.validate();
  return data;
}

ChannelRealization sample_channels(int num_devices, int outer_iters, std::mt19937_64& rng) {
  require(num_devices >= 1, "num_devices must be >= 1");
  require(outer_iters >= 1, "outer_iters must be >= 1");
  ChannelRealization channels;
  channels.h.resize(num_devices, outer_iters);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int t = 0; t < outer_iters; ++t) {
    for (int k = 0; k < num_devices; ++k) {
      const double u = uni(rng);
      channels.h(k, t) = std::sqrt(-std::log1p(-u));
    }
  }
  return channels;
}

double global_loss(const SyntheticDataset& dataset, const Eigen::VectorXd& model) {
  require(model.size() == dataset.features.cols(), "model dimension mismatch");
  const double n = static_cast<double>(dataset.num_samples());
  return (dataset.features * model - dataset.labels).squaredNorm() / (2.0 * n);
}

double prediction_mse(const SyntheticDataset& dataset, const Eigen::VectorXd& model) {
  require(model.size() == dataset.features.cols(), "model dimension mismatch");
  const double n = static_cast<double>(dataset.num_samples());
  return (dataset.features * model - dataset.labels).squaredNorm() / n;
}

Eigen::VectorXd local_sgd_epochs(const Eigen::VectorXd& model, const SyntheticDataset& dataset,
                                 int device, double gamma, int local_epochs, int minibatch_size,
                                 std::mt19937_64& rng) {
  dataset.validate();
  require(device >= 0 && device < dataset.num_devices(), "device index out of range");
  require(model.size() == dataset.features.cols(), "model dimension mismatch");
  require(std::isfinite(gamma) && gamma >= 0.0, "gamma must be >= 0");
  require(local_epochs >= 1, "local_epochs must be >= 1");
  const auto& shard = dataset.partition[device];
  require(minibatch_size >= 1 && minibatch_size <= static_cast<int>(shard.size()),
          "minibatch_size must be in [1, shard size]");

  Eigen::VectorXd w = model;
  std::vector<int> batch;
  batch.reserve(minibatch_size);
  for (int epoch = 0; epoch < local_epochs; ++epoch) {
    batch.clear();
    std::sample(shard.begin(), shard.end(), std::back_inserter(batch), minibatch_size, rng);
    w.noalias() -= gamma * minibatch_gradient(w, dataset, batch);
  }
  return w;
}

Eigen::VectorXd air_aggregate(const Eigen::MatrixXd& local_models, const Eigen::VectorXd& h_col,
                              const Eigen::VectorXd& p_col, double eta, double sigma_z_sq,
                              std::mt19937_64& noise_rng) {
  const int num_devices = static_cast<int>(local_models.cols());
  require(h_col.size() == num_devices && p_col.size() == num_devices,
          "channel/power columns must have one entry per device");
  require((h_col.array() >= 0.0).all() && (p_col.array() >= 0.0).all(),
          "channels and powers must be >= 0");
  require(std::isfinite(eta) && eta > 0.0, "eta must be positive");
  require(std::isfinite(sigma_z_sq) && sigma_z_sq >= 0.0, "sigma_z_sq must be >= 0");

  const Eigen::VectorXd amplitude = h_col.array() * p_col.array().sqrt();
  Eigen::VectorXd received = local_models * amplitude;
  // draw even when sigma is zero so paired runs consume identical streams
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = std::sqrt(sigma_z_sq);
  for (Eigen::Index j = 0; j < received.size(); ++j) received(j) += sigma * normal(noise_rng);
  return received / (std::sqrt(eta) * static_cast<double>(num_devices));
}

Eigen::VectorXd oma_aggregate(const Eigen::MatrixXd& local_models, int quant_levels,
                              std::mt19937_64& quant_rng) {
  const int num_devices = static_cast<int>(local_models.cols());
  require(num_devices >= 1, "need at least one local model");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(local_models.rows());
  for (int k = 0; k < num_devices; ++k) {
    sum += quantize(local_models.col(k), quant_levels, quant_rng);
  }
  return sum / static_cast<double>(num_devices);
}

TrainingTrace run_training(const SystemConfig& cfg, const RateSchedule& sched,
                           const SyntheticDataset& train, const SyntheticDataset& holdout,
                           double optimum_loss, int minibatch_size, AggregationMode mode,
                           const PowerSchedule* schedule, const ChannelRealization* channels,
                           int quant_levels, RandomStream& stream) {
  cfg.validate();
  sched.validate();
  train.validate();
  holdout.validate();
  require(train.num_devices() == cfg.num_devices, "dataset must have one shard per device");
  require(train.dim() == cfg.model_dim && holdout.dim() == cfg.model_dim,
          "dataset dimension must match model_dim");
  require(std::isfinite(optimum_loss), "optimum_loss must be finite");
  require(minibatch_size >= 1 && minibatch_size <= train.shard_size(),
          "minibatch_size must be in [1, shard size]");
  if (mode == AggregationMode::air) {
    require(schedule != nullptr && channels != nullptr,
            "analog mode needs a power schedule and channel realization");
    schedule->validate();
    channels->validate();
    require(schedule->devices() == cfg.num_devices && channels->devices() == cfg.num_devices,
            "schedule/channels must have one row per device");
    require(schedule->iters() >= cfg.outer_iters && channels->iters() >= cfg.outer_iters,
            "schedule/channels must cover every outer iteration");
  } else if (mode == AggregationMode::oma) {
    require(quant_levels >= 2, "quant_levels must be >= 2");
  }

  const int outer = cfg.outer_iters;
  const int num_devices = cfg.num_devices;
  TrainingTrace trace;
  trace.loss.resize(outer + 1);
  trace.gap.resize(outer + 1);
  trace.pred_mse.resize(outer + 1);
  trace.agg_err_sq = Eigen::VectorXd::Zero(outer + 1);
  trace.agg_misalign_sq = Eigen::VectorXd::Zero(outer + 1);
  trace.device_energy = Eigen::MatrixXd::Zero(num_devices, outer);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(cfg.model_dim);
  auto record = [&](int row) {
    trace.loss(row) = global_loss(train, w);
    trace.gap(row) = trace.loss(row) - optimum_loss;
    trace.pred_mse(row) = prediction_mse(holdout, w);
  };
  record(0);

  std::mt19937_64& minibatch_rng = stream.get(RandomStream::Sub::minibatch);
  for (int i = 0; i < outer; ++i) {
    const double gamma = learning_rate(sched, i);
    Eigen::MatrixXd locals(cfg.model_dim, num_devices);
    for (int k = 0; k < num_devices; ++k) {
      locals.col(k) =
          local_sgd_epochs(w, train, k, gamma, cfg.local_epochs, minibatch_size, minibatch_rng);
    }
    // same product/accumulation path as air_aggregate so a perfectly aligned
    // noiseless analog round reproduces the ideal round bit for bit
    const Eigen::VectorXd mean_model =
        (locals * Eigen::VectorXd::Ones(num_devices)) / static_cast<double>(num_devices);

    Eigen::VectorXd next;
    double misalign_sq = 0.0;
    switch (mode) {
      case AggregationMode::air: {
        next = air_aggregate(locals, channels->h.col(i), schedule->p.col(i), schedule->eta(i),
                             cfg.noise_power_w, stream.get(RandomStream::Sub::noise));
        const Eigen::VectorXd coef =
            (channels->h.col(i).array() * schedule->p.col(i).array().sqrt() /
                 std::sqrt(schedule->eta(i)) -
             1.0) /
            static_cast<double>(num_devices);
        misalign_sq = (locals * coef).squaredNorm();
        for (int k = 0; k < num_devices; ++k) {
          trace.device_energy(k, i) =
              schedule->p(k, i) * locals.col(k).squaredNorm() / cfg.model_dim;
        }
        break;
      }
      case AggregationMode::oma:
        next = oma_aggregate(locals, quant_levels, stream.get(RandomStream::Sub::quantize));
        break;
      case AggregationMode::ideal:
        next = mean_model;
        break;
    }

    trace.agg_err_sq(i + 1) = (next - mean_model).squaredNorm();
    trace.agg_misalign_sq(i + 1) = misalign_sq;
    w = std::move(next);
    record(i + 1);
  }

  trace.final_model = w;
  return trace;
}

}  // namespace airfed
