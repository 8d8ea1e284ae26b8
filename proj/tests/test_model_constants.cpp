#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "airfed/errors.hpp"
#include "airfed/fedavg_sim.hpp"
#include "airfed/model_constants.hpp"
#include "airfed/random_stream.hpp"
#include "support/test_util.hpp"

using namespace airfed;
using testutil::small_problem;
using testutil::SmallProblem;

TEST_CASE("learning rate is beta/(t+a)") {
  CHECK(learning_rate({10.0, 1.0}, 1) == doctest::Approx(1.0 / 11.0).epsilon(1e-15));
  CHECK(learning_rate({10.0, 1.0}, 0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(learning_rate({1.0, 2.0}, 3) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("learning rate decreases strictly and stays positive") {
  const RateSchedule sched{7.0, 1.2};
  double prev = learning_rate(sched, 0);
  for (int t = 1; t < 200; ++t) {
    const double gamma = learning_rate(sched, t);
    CHECK(gamma > 0.0);
    CHECK(gamma < prev);
    prev = gamma;
  }
}

TEST_CASE("contraction coefficient 1 - (Omega-1) mu gamma") {
  SmallProblem prob = small_problem(2, 3, 5);
  prob.constants.pl_constant_mu = 1.0;
  prob.schedule = {10.0, 1.0};  // gamma_1 = 1/11
  CHECK(contraction_coeff(prob.constants, prob.schedule, prob.system, 1) ==
        doctest::Approx(7.0 / 11.0).epsilon(1e-15));

  prob.system.local_epochs = 2;
  prob.schedule = {1.0, 1.0};  // gamma_1 = 0.5, beta = 1/mu exactly
  CHECK(contraction_coeff(prob.constants, prob.schedule, prob.system, 1) ==
        doctest::Approx(0.5).epsilon(1e-15));

  prob.system.local_epochs = 5;
  prob.constants.pl_constant_mu = 0.0;
  CHECK(contraction_coeff(prob.constants, prob.schedule, prob.system, 1) == 1.0);
}

TEST_CASE("contraction coefficient rejects nonpositive values") {
  SmallProblem prob = small_problem(2, 3, 11);
  prob.constants.pl_constant_mu = 1.0;
  prob.schedule = {9.0, 1.0};  // gamma_1 = 0.1, (Omega-1)*mu*gamma_1 = 1
  CHECK_THROWS_AS(contraction_coeff(prob.constants, prob.schedule, prob.system, 1),
                  validation_error);
}

TEST_CASE("iteration weights are suffix products of the contraction") {
  Eigen::VectorXd contraction(3);
  contraction << 0.5, 0.5, 0.5;
  const Eigen::VectorXd weights = iteration_weights(contraction);
  CHECK(weights(2) == 1.0);                                      // empty product at t = T
  CHECK(weights(0) == doctest::Approx(0.25).epsilon(1e-15));     // C_2 * C_3
  CHECK(weights(1) == doctest::Approx(0.5).epsilon(1e-15));

  const SmallProblem prob = small_problem(2, 20, 4);
  CHECK(iteration_weight(prob.constants, prob.schedule, prob.system, prob.system.outer_iters) ==
        1.0);
  double prev = 0.0;
  for (int t = 1; t <= prob.system.outer_iters; ++t) {
    const double j = iteration_weight(prob.constants, prob.schedule, prob.system, t);
    CHECK(j >= prev);
    prev = j;
  }
}

TEST_CASE("contraction increases over iterations on valid configs") {
  const SmallProblem prob = small_problem(3, 30, 5);
  const Eigen::VectorXd contraction =
      contraction_coeffs(prob.constants, prob.schedule, prob.system);
  for (int i = 0; i < contraction.size(); ++i) {
    CHECK(contraction(i) > 0.0);
    CHECK(contraction(i) < 1.0);
    if (i > 0) CHECK(contraction(i) > contraction(i - 1));
  }
}

TEST_CASE("gradient heterogeneity constant") {
  SmallProblem prob = small_problem(2, 3, 4);
  prob.constants.grad_divergence.setZero();
  prob.constants.grad_variance_hat.setZero();
  CHECK(grad_heterogeneity_B(prob.constants, prob.system) == 0.0);

  SmallProblem single = small_problem(1, 3, 4);
  single.constants.grad_divergence(0) = 2.0;
  single.constants.grad_variance_hat(0) = 0.0;
  CHECK(grad_heterogeneity_B(single.constants, single.system) ==
        doctest::Approx(2.0).epsilon(1e-15));

  SmallProblem pair = small_problem(2, 3, 4);
  pair.constants.grad_divergence = Eigen::VectorXd::Constant(2, 1.0);
  pair.constants.grad_variance_hat = Eigen::VectorXd::Constant(2, std::sqrt(2.0));
  pair.constants.minibatch_size = 2;
  CHECK(grad_heterogeneity_B(pair.constants, pair.system) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("gradient bound constant") {
  SmallProblem prob = small_problem(2, 3, 4);
  prob.constants.grad_bound.setZero();
  CHECK(grad_bound_V(prob.constants, prob.system) == 0.0);

  SmallProblem single = small_problem(1, 3, 4);
  single.constants.smoothness_l = 2.0;
  single.constants.grad_bound(0) = 3.0;
  CHECK(grad_bound_V(single.constants, single.system) == doctest::Approx(18.0).epsilon(1e-15));

  SmallProblem pair = small_problem(2, 3, 4);
  pair.constants.smoothness_l = 1.0;
  pair.constants.pl_constant_mu = 0.7;
  pair.constants.grad_bound << 1.0, 2.0;
  CHECK(grad_bound_V(pair.constants, pair.system) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("objective coefficient arithmetic") {
  SUBCASE("zero smoothness leaves only the bias weight") {
    const auto [a, b] = objective_coeffs_core(1.0, 1.0, 0.0, 3, 2);
    CHECK(a == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(b == 0.0);
  }
  SUBCASE("hand instance") {
    const auto [a, b] = objective_coeffs_core(1.0, 0.1, 1.0, 5, 10);
    CHECK(a == doctest::Approx(5.75).epsilon(1e-15));
    CHECK(b == doctest::Approx(0.0075).epsilon(1e-15));
  }
  SUBCASE("per-device weights are W_k^2/K") {
    SmallProblem prob = small_problem(4, 3, 4);
    prob.constants.model_bound = Eigen::VectorXd::Constant(4, 1.0);
    const ObjectiveCoeffs coeffs = objective_coeffs(prob.constants, prob.schedule, prob.system, 1);
    for (int k = 0; k < 4; ++k) CHECK(coeffs.c(k) == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("strictly positive for positive inputs") {
    const SmallProblem prob = small_problem(3, 6, 4);
    for (int t = 1; t <= prob.system.outer_iters; ++t) {
      const ObjectiveCoeffs coeffs =
          objective_coeffs(prob.constants, prob.schedule, prob.system, t);
      CHECK(coeffs.a_t > 0.0);
      CHECK(coeffs.b_t > 0.0);
      CHECK((coeffs.c.array() > 0.0).all());
    }
  }
}

namespace {

SyntheticDataset identity_dataset(int dim) {
  SyntheticDataset dataset;
  dataset.features = Eigen::MatrixXd::Identity(dim, dim);
  dataset.labels = Eigen::VectorXd::Zero(dim);
  dataset.partition.resize(1);
  for (int i = 0; i < dim; ++i) dataset.partition[0].push_back(i);
  return dataset;
}

}  // namespace

TEST_CASE("constants from an identity design matrix") {
  const int dim = 8;
  const SyntheticDataset dataset = identity_dataset(dim);
  const LearningConstants consts = estimate_constants_from_data(dataset, dim);
  CHECK(consts.smoothness_l == doctest::Approx(1.0 / dim + 1e-4).epsilon(1e-12));
  CHECK(consts.pl_constant_mu == doctest::Approx(1.0 / dim + 1e-4).epsilon(1e-12));
  CHECK(consts.optimum_loss == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(consts.initial_gap == doctest::Approx(0.0).epsilon(1e-12));
  // w* = 0, so the model-norm bound and everything scaled by it collapse
  CHECK(consts.model_bound(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(consts.grad_bound(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(consts.grad_divergence(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(consts.grad_variance_hat(0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("constants from the synthetic regression recipe") {
  RandomStream stream(17);
  const SyntheticDataset dataset =
      generate_synthetic_dataset(20, 10000, 10, 0.2, stream.get(RandomStream::Sub::data));
  const LearningConstants consts = estimate_constants_from_data(dataset, 500);

  // independent normal-equations solve on the same sample
  const Eigen::MatrixXd gram = dataset.features.transpose() * dataset.features;
  const Eigen::VectorXd w_star =
      gram.ldlt().solve(dataset.features.transpose() * dataset.labels);
  // coefficient standard error is roughly 0.2/sqrt(|D|) = 0.002
  CHECK(std::abs(w_star(1) - 1.0) < 0.006);
  CHECK(std::abs(w_star(4) - 3.0) < 0.006);
  for (int j : {0, 2, 3, 5, 11, 19}) CHECK(std::abs(w_star(j)) < 0.006);

  CHECK(consts.model_bound(0) * consts.model_bound(0) ==
        doctest::Approx(1.1 * w_star.squaredNorm()).epsilon(1e-9));
  const double residual =
      (dataset.features * w_star - dataset.labels).squaredNorm() / (2.0 * 10000.0);
  CHECK(consts.optimum_loss == doctest::Approx(residual).epsilon(1e-9));
  CHECK(consts.pl_constant_mu <= consts.smoothness_l);
  CHECK(consts.smoothness_l == doctest::Approx(1.0).epsilon(0.2));

  // deterministic given the dataset
  const LearningConstants again = estimate_constants_from_data(dataset, 500);
  CHECK(again.smoothness_l == consts.smoothness_l);
  CHECK(again.optimum_loss == consts.optimum_loss);
  CHECK(again.grad_divergence == consts.grad_divergence);
  CHECK(again.grad_variance_hat == consts.grad_variance_hat);
}

TEST_CASE("eager validation rejects malformed configs") {
  SUBCASE("peak budget below average budget") {
    SmallProblem prob = small_problem(2, 3, 4);
    prob.system.max_power_tilde_w(1) = 0.5 * prob.system.ave_power_tilde_w(1);
    CHECK_THROWS_AS(prob.system.validate(), validation_error);
  }
  SUBCASE("single local epoch") {
    SmallProblem prob = small_problem(2, 3, 4);
    prob.system.local_epochs = 1;
    CHECK_THROWS_AS(prob.system.validate(), validation_error);
  }
  SUBCASE("negative divergence entry") {
    SmallProblem prob = small_problem(2, 3, 4);
    prob.constants.grad_divergence(0) = -0.1;
    CHECK_THROWS_AS(prob.constants.validate(prob.system.num_devices), validation_error);
  }
  SUBCASE("PL constant above smoothness") {
    SmallProblem prob = small_problem(2, 3, 4);
    prob.constants.pl_constant_mu = 2.0 * prob.constants.smoothness_l;
    CHECK_THROWS_AS(prob.constants.validate(prob.system.num_devices), validation_error);
  }
  SUBCASE("rate scale too small for the contraction") {
    SmallProblem prob = small_problem(2, 3, 2);
    prob.schedule.scale_beta = 0.5 / prob.constants.pl_constant_mu;
    CHECK_THROWS_AS(validate_rate_schedule(prob.schedule, prob.constants, 2), validation_error);
  }
  SUBCASE("first-step rate too large for the smoothness") {
    SmallProblem prob = small_problem(2, 3, 4);
    prob.schedule.offset_a = 0.1;
    prob.schedule.scale_beta = 2.0;
    CHECK_THROWS_AS(validate_rate_schedule(prob.schedule, prob.constants, 4), validation_error);
  }
}
