#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mtbo/dataset.hpp"
#include "mtbo/kernels.hpp"

namespace mtbo {

struct PosteriorPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // joint across queries

  Eigen::VectorXd variances() const { return covariance.diagonal(); }
};

struct LogMarginalResult {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  bool rejected = false;  // factorization failed after jitter escalation
};

// Relative diagonal jitter added to the noisy Gram before factorization, and
// the escalation ceiling used when the factorization fails.
constexpr double kBaseJitterRel = 1e-6;
constexpr double kMaxJitterRel = 1e-2;

// Log density of the observed values under the ICM GP observation model, with
// its exact analytic gradient with respect to the packed hyperparameters
// (including the dependence of the relative jitter on the kernel diagonal).
// Operates on the dataset as given; callers standardize beforehand.
LogMarginalResult log_marginal_likelihood(const Dataset& data,
                                          const HyperparamPacking& packing,
                                          const Eigen::VectorXd& theta);

struct FitOptions {
  int rank = 0;       // 0 = full rank (num_tasks)
  int restarts = 10;
  std::uint64_t seed = 0;
  bool standardize = true;
  bool parallel = true;  // restarts may run in parallel
  std::optional<TaskStructure> structure;       // default: full(num_tasks, rank)
  std::optional<Eigen::VectorXd> extra_start;   // extra restart seed (packed)
  // Box for the log-scale hyperparameters during fitting; factor entries and
  // mean offsets are unconstrained.
  double log_lengthscale_lo = -4.605170185988091;  // log 0.01
  double log_lengthscale_hi = 4.605170185988092;   // log 100
  double log_output_var_lo = -9.210340371976182;   // log 1e-4
  double log_output_var_hi = 9.210340371976184;    // log 1e4
};

struct ModelOptions {
  bool standardize = false;
  std::optional<double> jitter_override;  // absolute; testing/diagnostics hook
};

// Immutable multi-task GP with cached factorization for posterior queries.
class FittedModel {
 public:
  // Maximum-marginal-likelihood fit over `restarts` bound-constrained
  // quasi-Newton runs from a canonical start plus scrambled-Sobol starts.
  // Deterministic given opts.seed. Throws std::runtime_error("fit failed")
  // when every restart is rejected.
  static FittedModel fit(const Dataset& data, const FitOptions& opts = {});

  // Model with fixed hyperparameters (no inference).
  static FittedModel with_hyperparameters(const Dataset& data,
                                          const SpatialHyperparams& spatial,
                                          const TaskCovariance& tasks,
                                          const Eigen::VectorXd& task_offsets =
                                              Eigen::VectorXd(),
                                          const ModelOptions& opts = {});

  // Joint posterior over queries on the raw outcome scale.
  PosteriorPrediction posterior(const Eigen::MatrixXd& query_points,
                                const std::vector<int>& query_tasks) const;
  // Same, on the model's internal (standardized) scale.
  PosteriorPrediction posterior_standardized(
      const Eigen::MatrixXd& query_points,
      const std::vector<int>& query_tasks) const;

  // B_{dd'} / sqrt(B_dd B_d'd'); throws on zero task variance.
  double inter_task_correlation(int d, int d2) const;

  const Dataset& dataset() const { return raw_data_; }
  const SpatialHyperparams& spatial() const { return spatial_; }
  const TaskCovariance& tasks() const { return tasks_; }
  const Eigen::VectorXd& task_mean_offsets() const { return offsets_; }
  const Standardization& standardization() const { return standardization_; }
  double log_marginal() const { return log_marginal_; }
  double jitter() const { return jitter_; }
  int num_tasks() const { return tasks_.num_tasks(); }
  Eigen::VectorXd packed_hyperparams() const;
  const TaskStructure& structure() const { return structure_; }

  // Training internals on the standardized scale, for acquisition code that
  // extends the conditioning set.
  const Eigen::MatrixXd& train_points() const { return points_; }
  const std::vector<int>& train_tasks() const { return train_tasks_; }
  const Eigen::VectorXd& train_values() const { return values_; }  // y_std
  const Eigen::VectorXd& noise_variances() const { return noise_; }
  const Eigen::VectorXd& prior_mean() const { return mean_; }
  const Eigen::MatrixXd& covariance_with_noise() const { return sigma_; }
  const Eigen::MatrixXd& chol_lower() const { return chol_; }

 private:
  FittedModel() = default;
  static FittedModel build(const Dataset& raw, const Standardization& std_tf,
                           const SpatialHyperparams& spatial,
                           const TaskCovariance& tasks,
                           const Eigen::VectorXd& offsets,
                           const TaskStructure& structure, double log_ml,
                           std::optional<double> jitter_override);

  Dataset raw_data_;
  Standardization standardization_;
  SpatialHyperparams spatial_;
  TaskCovariance tasks_;
  Eigen::VectorXd offsets_;  // per-task prior mean, standardized scale
  TaskStructure structure_;
  double log_marginal_ = 0.0;
  double jitter_ = 0.0;

  Eigen::MatrixXd points_;
  std::vector<int> train_tasks_;
  Eigen::VectorXd values_;
  Eigen::VectorXd noise_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd chol_;   // lower Cholesky factor of sigma_
  Eigen::VectorXd alpha_;  // sigma^{-1} (y - m)
};

// Per-fold leave-one-out result for one held-out target-task observation.
struct LooPoint {
  int index = 0;  // into the dataset's observation list
  double predicted_mean = 0.0;      // standardized scale
  double predicted_variance = 0.0;  // standardized scale
  double actual = 0.0;              // standardized scale
};

struct LooResult {
  std::vector<LooPoint> points;
  double mse = 0.0;
};

// Refits without each target-task observation (other-task data retained) and
// predicts it; MSE on the standardized scale of the full dataset. The
// full-data fit seeds one restart of every fold.
LooResult loo_cross_validation(const Dataset& data, int target_task,
                               const FitOptions& opts = {});

// Draw of the latent task functions at (points, tasks) under the ICM prior.
Eigen::VectorXd sample_icm_prior(const Eigen::MatrixXd& points,
                                 const std::vector<int>& tasks,
                                 const TaskCovariance& task_cov,
                                 const SpatialHyperparams& h,
                                 std::uint64_t seed);

// Remaps sparse task ids to a dense 0..T-1 range (order-preserving); returns
// the new dataset and the old id for each new id.
std::pair<Dataset, std::vector<int>> compact_tasks(const Dataset& data);

}  // namespace mtbo
