#include <doctest.h>

#include "mtbo/analysis.hpp"
#include "mtbo/parallel.hpp"
#include "mtbo/rng.hpp"

using namespace mtbo;

// The OpenMP paths must be bit-identical to the serial references: parallel
// loops only fill per-index slots and reductions stay serial.

TEST_CASE("parallel_for_index covers every index exactly once") {
  std::vector<int> hits(1000, 0);
  parallel_for_index(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  std::vector<int> serial_hits(1000, 0);
  parallel_for_index(
      serial_hits.size(), [&](std::size_t i) { serial_hits[i] += 1; }, false);
  for (int h : serial_hits) CHECK(h == 1);
}

TEST_CASE("learning curves are identical with and without worker threads") {
  SpatialHyperparams h;
  h.output_variance = 1.0;
  h.lengthscales = Eigen::VectorXd::Constant(2, 0.5);
  const Dataset data = make_generative_two_task(2, 8, 12, 0.8, h, 1e-3, 2222);

  LearningCurveConfig cfg;
  cfg.replicates = 8;
  cfg.fit_restarts = 2;
  cfg.seed = 13;
  cfg.standardize_first = false;
  const auto par = empirical_learning_curve(data, {{3, 6}}, cfg);
  cfg.parallel = false;
  const auto ser = empirical_learning_curve(data, {{3, 6}}, cfg);
  CHECK(par[0].mean_mse == ser[0].mean_mse);
  CHECK(par[0].mean_predictive_variance == ser[0].mean_predictive_variance);
  CHECK(par[0].mse_stderr == ser[0].mse_stderr);
  CHECK(par[0].variance_stderr == ser[0].variance_stderr);
}

TEST_CASE("fits are identical with and without parallel restarts") {
  SpatialHyperparams h;
  h.output_variance = 1.0;
  h.lengthscales = Eigen::VectorXd::Constant(2, 0.4);
  const Dataset data = make_generative_two_task(2, 10, 10, 0.7, h, 1e-3, 777);

  FitOptions opts;
  opts.rank = 2;
  opts.restarts = 5;
  opts.seed = 99;
  const auto a = FittedModel::fit(data, opts);
  opts.parallel = false;
  const auto b = FittedModel::fit(data, opts);
  CHECK(a.log_marginal() == b.log_marginal());
  CHECK((a.packed_hyperparams() - b.packed_hyperparams()).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("the proposition battery ignores the thread count") {
  const auto a = run_proposition_battery(40, 4242);
  const int prev = max_threads();
  set_thread_cap(1);
  const auto b = run_proposition_battery(40, 4242);
  set_thread_cap(prev);
  REQUIRE(a.checks.size() == b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    CHECK(a.checks[i].lhs == b.checks[i].lhs);
    CHECK(a.checks[i].rhs == b.checks[i].rhs);
  }
}
