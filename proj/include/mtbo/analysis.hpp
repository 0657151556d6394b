#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "mtbo/dataset.hpp"
#include "mtbo/mtgp.hpp"

namespace mtbo {

struct LearningCurvePoint {
  int n_online = 0;
  int n_offline = 0;
  double mean_mse = 0.0;
  double mse_stderr = 0.0;
  double mean_predictive_variance = 0.0;
  double variance_stderr = 0.0;
  int replicates = 0;
};

struct SingleTaskCurve {
  std::vector<int> n;  // strictly increasing
  std::vector<double> mean_variance;
  std::vector<double> variance_stderr;
};

struct FixedHyperparams {
  SpatialHyperparams spatial;
  TaskCovariance tasks;
};

struct LearningCurveConfig {
  int replicates = 500;
  std::uint64_t seed = 0;
  int rank = 2;
  int fit_restarts = 10;
  bool parallel = true;
  // Standardize the full dataset (per task) once before subsampling; disable
  // when the data are already on the model scale (generative checks).
  bool standardize_first = true;
  // Fixed hyperparameters instead of per-subsample inference.
  std::optional<FixedHyperparams> fixed;
};

// Cross-validation learning-curve estimate: per (n_T, n_S) grid point,
// repeatedly subsample without replacement, fit (kernel inference included
// unless fixed), predict the held-out online points, and average MSE and
// predictive variance. Deterministic given the seed.
std::vector<LearningCurvePoint> empirical_learning_curve(
    const Dataset& data, const std::vector<std::pair<int, int>>& grid,
    const LearningCurveConfig& config);

// Single-task curve from one task's observations: n training points drawn at
// random, predictive variance measured on the held-out rest.
SingleTaskCurve single_task_learning_curve(const Dataset& data,
                                           const std::vector<int>& n_grid,
                                           const LearningCurveConfig& config);

// rho^2 eps(n_T + n_S) + (1 - rho^2) eps(n_T), with linear interpolation of
// the measured curve; throws outside its support.
double chai_bound(const SingleTaskCurve& curve, double rho, int n_online,
                  int n_offline);

struct PropositionCheck {
  double lhs = 0.0;         // sigma_T^2(x*, rho)
  double rhs = 0.0;         // rho^2 sigma^2(rho=1) + (1-rho^2) sigma^2(rho=0)
  double variance_rho1 = 0.0;
  double variance_rho0 = 0.0;
  bool holds = false;       // lhs >= rhs - 1e-8 * tau^2 slack
};

// Fixed-kernel two-task predictive-variance inequality with unit task
// variances, B = [[1, rho], [rho, 1]].
PropositionCheck verify_proposition_bound(const SpatialHyperparams& h,
                                          const Eigen::MatrixXd& x_online,
                                          const Eigen::VectorXd& noise_online,
                                          const Eigen::MatrixXd& x_offline,
                                          const Eigen::VectorXd& noise_offline,
                                          const Eigen::VectorXd& x_star,
                                          double rho);

struct PropositionBattery {
  int total = 0;
  int violations = 0;
  double max_violation = 0.0;  // max(rhs - lhs, 0) observed
  std::vector<PropositionCheck> checks;
};

// Randomized instances in 3-d with per-observation noise; any violation
// beyond the slack indicates an implementation bug.
PropositionBattery run_proposition_battery(int instances, std::uint64_t seed);

struct KernelTransferCurves {
  std::vector<LearningCurvePoint> inferred;        // single-task, inferred kernel
  std::vector<LearningCurvePoint> frozen_offline;  // single-task, offline kernel
  std::vector<LearningCurvePoint> mtgp;            // MTGP with the offline data
};

// Learning curves isolating the value of the shared kernel: the offline
// kernel comes from a single-task fit to all offline observations.
KernelTransferCurves kernel_transfer_curves(const Dataset& online_data,
                                            const Dataset& offline_data,
                                            const std::vector<int>& n_grid,
                                            const LearningCurveConfig& config);

// Two-task dataset drawn from the ICM prior with unit task variances and
// correlation rho: task 0 online (n_online points), task 1 offline. Points
// from a scrambled Sobol design; observation noise with the given variance.
Dataset make_generative_two_task(int dim, int n_online, int n_offline,
                                 double rho, const SpatialHyperparams& h,
                                 double noise_var, std::uint64_t seed);

}  // namespace mtbo
