#pragma once

#include <Eigen/Core>
#include <vector>

namespace mtbo {

// ARD RBF spatial kernel hyperparameters: output variance tau^2 and one
// lengthscale per input dimension, all strictly positive.
struct SpatialHyperparams {
  double output_variance = 1.0;
  Eigen::VectorXd lengthscales;

  int input_dim() const { return static_cast<int>(lengthscales.size()); }
};

// Cross-task covariance B = factor * factor^T, PSD by construction with
// rank(B) <= factor.cols().
struct TaskCovariance {
  Eigen::MatrixXd factor;  // D x P, P <= D

  int num_tasks() const { return static_cast<int>(factor.rows()); }
  int rank_bound() const { return static_cast<int>(factor.cols()); }
  Eigen::MatrixXd matrix() const { return factor * factor.transpose(); }
};

TaskCovariance build_task_covariance(const Eigen::MatrixXd& factor);

// k(x, x') = tau^2 exp(-1/2 sum_j ((x_j - x'_j) / ell_j)^2)
double rbf_covariance(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                      const SpatialHyperparams& h);

// Cov[f_d(x), f_d'(x')] = B_{d,d'} * kappa(x, x')
double icm_covariance(int task, const Eigen::VectorXd& x, int task2,
                      const Eigen::VectorXd& x2, const TaskCovariance& tasks,
                      const SpatialHyperparams& h);

// Spatial Gram kappa(X, X) over rows of `points` (n x m).
Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points,
                         const SpatialHyperparams& h);
Eigen::MatrixXd rbf_gram_serial(const Eigen::MatrixXd& points,
                                const SpatialHyperparams& h);

// Multi-task Gram: K_ij = B(t_i, t_j) * kappa(x_i, x_j).
Eigen::MatrixXd icm_gram(const Eigen::MatrixXd& points,
                         const std::vector<int>& tasks,
                         const TaskCovariance& task_cov,
                         const SpatialHyperparams& h);
Eigen::MatrixXd icm_gram_serial(const Eigen::MatrixXd& points,
                                const std::vector<int>& tasks,
                                const TaskCovariance& task_cov,
                                const SpatialHyperparams& h);

// Cross covariance between query rows (q x m, with query_tasks) and data rows.
Eigen::MatrixXd icm_cross(const Eigen::MatrixXd& query_points,
                          const std::vector<int>& query_tasks,
                          const Eigen::MatrixXd& points,
                          const std::vector<int>& tasks,
                          const TaskCovariance& task_cov,
                          const SpatialHyperparams& h);

// How the free parameters map onto the task factor.
//
// Full: every entry of the D x P factor is free; no per-task mean offsets.
// BatchComposite (simulator batch adjustments): P = 2; rows 0 and 1 free,
// row k >= 2 is a free scalar times row 1, and tasks 1..D-1 carry free
// constant mean offsets. batch_rank >= 2 instead leaves all rows free while
// keeping the offsets.
struct TaskStructure {
  enum class Kind { Full, BatchComposite };

  Kind kind = Kind::Full;
  int num_tasks = 1;
  int rank = 1;        // P (forced to 2 for BatchComposite)
  int batch_rank = 1;  // BatchComposite only

  static TaskStructure full(int num_tasks, int rank);
  static TaskStructure batch_composite(int num_tasks, int batch_rank = 1);

  int factor_parameter_count() const;
  int offset_count() const;  // number of free per-task mean offsets

  Eigen::MatrixXd make_factor(const Eigen::VectorXd& params) const;
  Eigen::VectorXd extract_params(const Eigen::MatrixXd& factor) const;
  // d(factor)/d(params[j]) for the LML gradient chain rule.
  std::vector<Eigen::MatrixXd> factor_jacobian(
      const Eigen::VectorXd& params) const;
  // Per-task mean offsets (task 0 pinned at 0).
  Eigen::VectorXd make_offsets(const Eigen::VectorXd& offset_params) const;
};

// Flat hyperparameter vector: [log tau^2, log ell_1..log ell_m,
// task factor params, task mean offsets]. Positivity of tau^2 and the
// lengthscales is enforced by the log parameterization; factor entries and
// offsets are unconstrained.
struct HyperparamPacking {
  int input_dim = 0;
  TaskStructure structure;

  int size() const {
    return 1 + input_dim + structure.factor_parameter_count() +
           structure.offset_count();
  }
  int factor_offset() const { return 1 + input_dim; }
  int mean_offset_offset() const {
    return factor_offset() + structure.factor_parameter_count();
  }

  Eigen::VectorXd pack(const SpatialHyperparams& h, const TaskCovariance& tasks,
                       const Eigen::VectorXd& offset_params) const;
  void unpack(const Eigen::VectorXd& theta, SpatialHyperparams* h,
              TaskCovariance* tasks, Eigen::VectorXd* task_offsets) const;
};

}  // namespace mtbo
