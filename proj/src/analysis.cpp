#include "mtbo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mtbo/parallel.hpp"
#include "mtbo/rng.hpp"
#include "mtbo/sobol.hpp"

namespace mtbo {

namespace {

std::vector<int> sample_without_replacement(std::vector<int> pool, int count,
                                            std::mt19937_64& eng) {
  // partial Fisher-Yates
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(eng() % (pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct ReplicateOutcome {
  double mse = std::numeric_limits<double>::quiet_NaN();
  double mean_var = std::numeric_limits<double>::quiet_NaN();
};

LearningCurvePoint aggregate(int n_online, int n_offline,
                             const std::vector<ReplicateOutcome>& reps) {
  LearningCurvePoint pt;
  pt.n_online = n_online;
  pt.n_offline = n_offline;
  double mse_sum = 0.0, var_sum = 0.0;
  int count = 0;
  for (const auto& r : reps) {
    if (!std::isfinite(r.mse)) continue;
    mse_sum += r.mse;
    var_sum += r.mean_var;
    ++count;
  }
  if (count == 0) throw std::runtime_error("learning curve: all replicates failed");
  pt.replicates = count;
  pt.mean_mse = mse_sum / count;
  pt.mean_predictive_variance = var_sum / count;
  double mse_sq = 0.0, var_sq = 0.0;
  for (const auto& r : reps) {
    if (!std::isfinite(r.mse)) continue;
    mse_sq += (r.mse - pt.mean_mse) * (r.mse - pt.mean_mse);
    var_sq += (r.mean_var - pt.mean_predictive_variance) *
              (r.mean_var - pt.mean_predictive_variance);
  }
  if (count > 1) {
    pt.mse_stderr = std::sqrt(mse_sq / (count - 1) / count);
    pt.variance_stderr = std::sqrt(var_sq / (count - 1) / count);
  }
  return pt;
}

// One subsample fit + held-out prediction; shared by every curve estimator.
ReplicateOutcome one_replicate(const Dataset& data,
                               const std::vector<int>& train_idx,
                               const std::vector<int>& held_out_idx,
                               const LearningCurveConfig& config,
                               std::uint64_t seed) {
  const Dataset subset = data.subset(train_idx);
  auto [compacted, old_ids] = compact_tasks(subset);

  FittedModel model = [&] {
    if (config.fixed) {
      // Restrict the fixed task covariance to the tasks present.
      Eigen::MatrixXd factor(old_ids.size(), config.fixed->tasks.rank_bound());
      for (std::size_t t = 0; t < old_ids.size(); ++t) {
        factor.row(t) = config.fixed->tasks.factor.row(old_ids[t]);
      }
      if (factor.cols() > factor.rows()) {
        Eigen::MatrixXd squeezed =
            Eigen::MatrixXd::Constant(1, 1, factor.row(0).norm());
        factor = squeezed;
      }
      return FittedModel::with_hyperparameters(compacted, config.fixed->spatial,
                                               build_task_covariance(factor));
    }
    FitOptions opts;
    opts.rank = std::min<int>(config.rank, compacted.num_tasks());
    opts.restarts = config.fit_restarts;
    opts.seed = seed;
    opts.standardize = false;  // the caller standardized once up front
    opts.parallel = false;
    return FittedModel::fit(compacted, opts);
  }();

  // Held-out online points, predicted at the online task's compacted id.
  int online_new_id = -1;
  for (std::size_t t = 0; t < old_ids.size(); ++t) {
    if (old_ids[t] == 0) online_new_id = static_cast<int>(t);
  }
  if (online_new_id < 0) {
    throw std::runtime_error("learning curve: online task absent from subsample");
  }
  const int h = static_cast<int>(held_out_idx.size());
  Eigen::MatrixXd queries(h, data.dim);
  Eigen::VectorXd actual(h);
  for (int i = 0; i < h; ++i) {
    queries.row(i) = data.observations[held_out_idx[i]].point.transpose();
    actual[i] = data.observations[held_out_idx[i]].mean;
  }
  const auto post = model.posterior_standardized(
      queries, std::vector<int>(h, online_new_id));

  ReplicateOutcome out;
  out.mse = (post.mean - actual).squaredNorm() / h;
  out.mean_var = post.covariance.diagonal().mean();
  return out;
}

}  // namespace

std::vector<LearningCurvePoint> empirical_learning_curve(
    const Dataset& raw, const std::vector<std::pair<int, int>>& grid,
    const LearningCurveConfig& config) {
  if (config.replicates < 1) {
    throw std::invalid_argument("learning curve: replicates >= 1");
  }
  const Dataset data = config.standardize_first
                           ? Standardization::fit_to(raw).apply(raw)
                           : raw;
  const std::vector<int> online_idx = data.indices_of_task(0);
  const std::vector<int> offline_idx = data.indices_of_task(1);

  std::vector<LearningCurvePoint> out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto [n_t, n_s] = grid[g];
    if (n_t < 1 || n_t >= static_cast<int>(online_idx.size())) {
      throw std::invalid_argument(
          "learning curve: n_T must leave at least one held-out online point");
    }
    if (n_s < 0 || n_s > static_cast<int>(offline_idx.size())) {
      throw std::invalid_argument("learning curve: n_S exceeds offline data");
    }
    std::vector<ReplicateOutcome> reps(config.replicates);
    parallel_for_index(
        config.replicates,
        [&, n_t = n_t, n_s = n_s](std::size_t r) {
          auto eng = make_engine(config.seed, 0xc0de00ULL + g * 100003 + r);
          const auto train_online =
              sample_without_replacement(online_idx, n_t, eng);
          std::vector<int> train = train_online;
          if (n_s > 0) {
            const auto train_offline =
                sample_without_replacement(offline_idx, n_s, eng);
            train.insert(train.end(), train_offline.begin(), train_offline.end());
          }
          std::vector<int> held;
          for (int i : online_idx) {
            if (!std::binary_search(train_online.begin(), train_online.end(), i)) {
              held.push_back(i);
            }
          }
          reps[r] = one_replicate(data, train, held, config,
                                  derive_seed(config.seed, g * 100003 + r));
        },
        config.parallel);
    out.push_back(aggregate(n_t, n_s, reps));
  }
  return out;
}

SingleTaskCurve single_task_learning_curve(const Dataset& data,
                                           const std::vector<int>& n_grid,
                                           const LearningCurveConfig& config) {
  std::vector<std::pair<int, int>> grid;
  grid.reserve(n_grid.size());
  for (int n : n_grid) grid.emplace_back(n, 0);
  LearningCurveConfig cfg = config;
  cfg.rank = 1;
  const auto pts = empirical_learning_curve(data, grid, cfg);
  SingleTaskCurve curve;
  for (const auto& p : pts) {
    curve.n.push_back(p.n_online);
    curve.mean_variance.push_back(p.mean_predictive_variance);
    curve.variance_stderr.push_back(p.variance_stderr);
  }
  return curve;
}

namespace {

double interpolate_curve(const SingleTaskCurve& curve, double n) {
  if (curve.n.size() < 1) {
    throw std::invalid_argument("chai_bound: empty curve");
  }
  if (n < curve.n.front() || n > curve.n.back()) {
    throw std::runtime_error("chai_bound: insufficient curve support");
  }
  for (std::size_t i = 1; i < curve.n.size(); ++i) {
    if (n <= curve.n[i]) {
      const double x0 = curve.n[i - 1], x1 = curve.n[i];
      const double y0 = curve.mean_variance[i - 1], y1 = curve.mean_variance[i];
      if (x1 == x0) return y1;
      return y0 + (y1 - y0) * (n - x0) / (x1 - x0);
    }
  }
  return curve.mean_variance.back();
}

}  // namespace

double chai_bound(const SingleTaskCurve& curve, double rho, int n_online,
                  int n_offline) {
  if (rho < -1.0 || rho > 1.0) {
    throw std::invalid_argument("chai_bound: rho in [-1, 1]");
  }
  const double r2 = rho * rho;
  return r2 * interpolate_curve(curve, n_online + n_offline) +
         (1.0 - r2) * interpolate_curve(curve, n_online);
}

namespace {

double two_task_variance(const SpatialHyperparams& h,
                         const Eigen::MatrixXd& x_online,
                         const Eigen::VectorXd& noise_online,
                         const Eigen::MatrixXd& x_offline,
                         const Eigen::VectorXd& noise_offline,
                         const Eigen::VectorXd& x_star, double rho) {
  const int n_t = static_cast<int>(x_online.rows());
  const int n_s = static_cast<int>(x_offline.rows());
  Dataset data;
  data.dim = static_cast<int>(x_online.cols());
  for (int i = 0; i < n_t; ++i) {
    data.observations.push_back(
        Observation{x_online.row(i).transpose(), 0, 0, 0.0, noise_online[i]});
  }
  for (int i = 0; i < n_s; ++i) {
    data.observations.push_back(
        Observation{x_offline.row(i).transpose(), 1, 0, 0.0, noise_offline[i]});
  }
  // Exact rank-1/rank-2 factors of [[1, rho], [rho, 1]].
  Eigen::MatrixXd factor;
  if (std::abs(std::abs(rho) - 1.0) < 1e-15) {
    factor.resize(2, 1);
    factor << 1.0, rho;
  } else {
    factor.resize(2, 2);
    factor << 1.0, 0.0, rho, std::sqrt(1.0 - rho * rho);
  }
  const FittedModel model = FittedModel::with_hyperparameters(
      data, h, build_task_covariance(factor));
  Eigen::MatrixXd q(1, data.dim);
  q.row(0) = x_star.transpose();
  return model.posterior_standardized(q, {0}).covariance(0, 0);
}

}  // namespace

PropositionCheck verify_proposition_bound(const SpatialHyperparams& h,
                                          const Eigen::MatrixXd& x_online,
                                          const Eigen::VectorXd& noise_online,
                                          const Eigen::MatrixXd& x_offline,
                                          const Eigen::VectorXd& noise_offline,
                                          const Eigen::VectorXd& x_star,
                                          double rho) {
  PropositionCheck check;
  check.lhs = two_task_variance(h, x_online, noise_online, x_offline,
                                noise_offline, x_star, rho);
  check.variance_rho1 = two_task_variance(h, x_online, noise_online, x_offline,
                                          noise_offline, x_star, 1.0);
  check.variance_rho0 = two_task_variance(h, x_online, noise_online, x_offline,
                                          noise_offline, x_star, 0.0);
  const double r2 = rho * rho;
  check.rhs = r2 * check.variance_rho1 + (1.0 - r2) * check.variance_rho0;
  check.holds = check.lhs >= check.rhs - 1e-8 * h.output_variance;
  return check;
}

PropositionBattery run_proposition_battery(int instances, std::uint64_t seed) {
  PropositionBattery battery;
  battery.total = instances;
  battery.checks.resize(instances);
  std::vector<char> violated(instances, 0);
  std::vector<double> excess(instances, 0.0);

  parallel_for_index(instances, [&](std::size_t i) {
    auto eng = make_engine(seed, 0xb0047ULL + i);
    const int dim = 3;
    SpatialHyperparams h;
    h.output_variance = 0.5 + 1.5 * uniform01(eng);
    h.lengthscales.resize(dim);
    for (int j = 0; j < dim; ++j) h.lengthscales[j] = 0.2 + 0.8 * uniform01(eng);
    const int n_t = 1 + static_cast<int>(eng() % 6);
    const int n_s = 1 + static_cast<int>(eng() % 10);
    Eigen::MatrixXd x_t(n_t, dim), x_s(n_s, dim);
    for (int r = 0; r < n_t; ++r) {
      for (int j = 0; j < dim; ++j) x_t(r, j) = uniform01(eng);
    }
    for (int r = 0; r < n_s; ++r) {
      for (int j = 0; j < dim; ++j) x_s(r, j) = uniform01(eng);
    }
    Eigen::VectorXd e_t(n_t), e_s(n_s);
    for (int r = 0; r < n_t; ++r) e_t[r] = 1e-4 + 0.1 * uniform01(eng);
    for (int r = 0; r < n_s; ++r) e_s[r] = 1e-4 + 0.1 * uniform01(eng);
    Eigen::VectorXd x_star(dim);
    for (int j = 0; j < dim; ++j) x_star[j] = uniform01(eng);
    const double rho = -1.0 + 2.0 * uniform01(eng);

    battery.checks[i] =
        verify_proposition_bound(h, x_t, e_t, x_s, e_s, x_star, rho);
    if (!battery.checks[i].holds) {
      violated[i] = 1;
      excess[i] = battery.checks[i].rhs - battery.checks[i].lhs;
    }
  });

  for (int i = 0; i < instances; ++i) {
    battery.violations += violated[i];
    battery.max_violation = std::max(battery.max_violation, excess[i]);
  }
  return battery;
}

KernelTransferCurves kernel_transfer_curves(const Dataset& online_data,
                                            const Dataset& offline_data,
                                            const std::vector<int>& n_grid,
                                            const LearningCurveConfig& config) {
  // Best offline kernel: single-task fit to all offline observations.
  Dataset offline = offline_data;
  for (auto& obs : offline.observations) obs.task = 0;
  FitOptions off_opts;
  off_opts.rank = 1;
  off_opts.restarts = config.fit_restarts;
  off_opts.seed = derive_seed(config.seed, 0x0ff1ULL);
  off_opts.standardize = config.standardize_first;
  const FittedModel offline_fit = FittedModel::fit(offline, off_opts);

  KernelTransferCurves out;
  std::vector<std::pair<int, int>> grid_t;
  for (int n : n_grid) grid_t.emplace_back(n, 0);

  // (a) single-task on online data, kernel inferred per subsample.
  LearningCurveConfig cfg_a = config;
  cfg_a.rank = 1;
  out.inferred = empirical_learning_curve(online_data, grid_t, cfg_a);

  // (b) single-task on online data with the frozen offline kernel.
  LearningCurveConfig cfg_b = config;
  cfg_b.rank = 1;
  cfg_b.fixed = FixedHyperparams{offline_fit.spatial(), offline_fit.tasks()};
  out.frozen_offline = empirical_learning_curve(online_data, grid_t, cfg_b);

  // (c) MTGP: online subsample plus all offline observations.
  Dataset combined = online_data;
  for (auto& obs : combined.observations) obs.task = 0;
  for (auto obs : offline_data.observations) {
    obs.task = 1;
    combined.observations.push_back(std::move(obs));
  }
  std::vector<std::pair<int, int>> grid_c;
  for (int n : n_grid) {
    grid_c.emplace_back(n, static_cast<int>(offline_data.observations.size()));
  }
  LearningCurveConfig cfg_c = config;
  cfg_c.rank = 2;
  out.mtgp = empirical_learning_curve(combined, grid_c, cfg_c);
  return out;
}

Dataset make_generative_two_task(int dim, int n_online, int n_offline,
                                 double rho, const SpatialHyperparams& h,
                                 double noise_var, std::uint64_t seed) {
  const int n = n_online + n_offline;
  SobolSequence seq(dim, derive_seed(seed, 0x9e40ULL));
  Eigen::MatrixXd points(n, dim);
  for (int i = 0; i < n; ++i) {
    const auto& u = seq.next();
    for (int j = 0; j < dim; ++j) points(i, j) = u[j];
  }
  std::vector<int> tasks(n, 0);
  for (int i = n_online; i < n; ++i) tasks[i] = 1;

  Eigen::MatrixXd factor;
  if (std::abs(std::abs(rho) - 1.0) < 1e-15) {
    factor.resize(2, 1);
    factor << 1.0, rho;
  } else {
    factor.resize(2, 2);
    factor << 1.0, 0.0, rho, std::sqrt(1.0 - rho * rho);
  }
  const Eigen::VectorXd f = sample_icm_prior(
      points, tasks, build_task_covariance(factor), h, derive_seed(seed, 1));

  auto eng = make_engine(seed, 2);
  Dataset data;
  data.outcome_name = "generative";
  data.dim = dim;
  const double noise_sd = std::sqrt(noise_var);
  for (int i = 0; i < n; ++i) {
    Observation obs;
    obs.point = points.row(i).transpose();
    obs.task = tasks[i];
    obs.batch = 0;
    obs.mean = f[i] + noise_sd * normal_draw(eng);
    obs.noise_variance = noise_var;
    data.observations.push_back(std::move(obs));
  }
  return data;
}

}  // namespace mtbo
