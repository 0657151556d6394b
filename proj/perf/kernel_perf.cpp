// Serial reference vs OpenMP kernels. Run with --benchmark_filter=... to
// narrow; the serial variants are the implementations the tests pin the
// parallel ones against.

#include <benchmark/benchmark.h>

#include "mtbo/analysis.hpp"
#include "mtbo/kernels.hpp"
#include "mtbo/mtgp.hpp"
#include "mtbo/rng.hpp"

namespace {

using namespace mtbo;

struct GramInputs {
  Eigen::MatrixXd points;
  std::vector<int> tasks;
  TaskCovariance task_cov;
  SpatialHyperparams h;
};

GramInputs make_gram_inputs(int n, int dim) {
  auto eng = make_engine(1);
  GramInputs in;
  in.points.resize(n, dim);
  in.tasks.resize(n);
  for (int i = 0; i < n; ++i) {
    in.tasks[i] = static_cast<int>(eng() % 2);
    for (int j = 0; j < dim; ++j) in.points(i, j) = uniform01(eng);
  }
  Eigen::MatrixXd f(2, 2);
  f << 1.0, 0.0, 0.8, 0.6;
  in.task_cov = build_task_covariance(f);
  in.h.output_variance = 1.0;
  in.h.lengthscales = Eigen::VectorXd::Constant(dim, 0.5);
  return in;
}

void bm_gram_serial(benchmark::State& state) {
  const auto in = make_gram_inputs(static_cast<int>(state.range(0)), 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        icm_gram_serial(in.points, in.tasks, in.task_cov, in.h));
  }
}

void bm_gram_parallel(benchmark::State& state) {
  const auto in = make_gram_inputs(static_cast<int>(state.range(0)), 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(icm_gram(in.points, in.tasks, in.task_cov, in.h));
  }
}

Dataset curve_dataset() {
  SpatialHyperparams h;
  h.output_variance = 1.0;
  h.lengthscales = Eigen::VectorXd::Constant(3, 0.5);
  return make_generative_two_task(3, 12, 40, 0.8, h, 1e-3, 7);
}

void bm_learning_curve(benchmark::State& state, bool parallel) {
  const Dataset data = curve_dataset();
  SpatialHyperparams h;
  h.output_variance = 1.0;
  h.lengthscales = Eigen::VectorXd::Constant(3, 0.5);
  Eigen::MatrixXd f(2, 2);
  f << 1.0, 0.0, 0.8, 0.6;
  LearningCurveConfig cfg;
  cfg.replicates = 32;
  cfg.standardize_first = false;
  cfg.fixed = FixedHyperparams{h, build_task_covariance(f)};
  cfg.parallel = parallel;
  for (auto _ : state) {
    benchmark::DoNotOptimize(empirical_learning_curve(data, {{4, 20}}, cfg));
  }
}

void bm_curve_serial(benchmark::State& state) { bm_learning_curve(state, false); }
void bm_curve_parallel(benchmark::State& state) { bm_learning_curve(state, true); }

void bm_fit_restarts(benchmark::State& state, bool parallel) {
  const Dataset data = curve_dataset();
  for (auto _ : state) {
    FitOptions opts;
    opts.rank = 2;
    opts.restarts = 6;
    opts.seed = 3;
    opts.parallel = parallel;
    benchmark::DoNotOptimize(FittedModel::fit(data, opts));
  }
}

void bm_fit_serial(benchmark::State& state) { bm_fit_restarts(state, false); }
void bm_fit_parallel(benchmark::State& state) { bm_fit_restarts(state, true); }

BENCHMARK(bm_gram_serial)->Arg(128)->Arg(512);
BENCHMARK(bm_gram_parallel)->Arg(128)->Arg(512);
BENCHMARK(bm_curve_serial);
BENCHMARK(bm_curve_parallel);
BENCHMARK(bm_fit_serial);
BENCHMARK(bm_fit_parallel);

}  // namespace

BENCHMARK_MAIN();
