#include "mtbo/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "mtbo/parallel.hpp"

namespace mtbo {

namespace {

void check_dims(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                const SpatialHyperparams& h) {
  if (x.size() != x2.size() || x.size() != h.lengthscales.size()) {
    throw std::invalid_argument("rbf_covariance: dimension mismatch");
  }
}

inline double scaled_sqdist(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                            const Eigen::VectorXd& ell) {
  double s = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    const double d = (x[j] - x2[j]) / ell[j];
    s += d * d;
  }
  return s;
}

}  // namespace

TaskCovariance build_task_covariance(const Eigen::MatrixXd& factor) {
  if (factor.cols() < 1 || factor.cols() > factor.rows()) {
    throw std::invalid_argument("build_task_covariance: need 1 <= P <= D");
  }
  return TaskCovariance{factor};
}

double rbf_covariance(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                      const SpatialHyperparams& h) {
  check_dims(x, x2, h);
  return h.output_variance * std::exp(-0.5 * scaled_sqdist(x, x2, h.lengthscales));
}

double icm_covariance(int task, const Eigen::VectorXd& x, int task2,
                      const Eigen::VectorXd& x2, const TaskCovariance& tasks,
                      const SpatialHyperparams& h) {
  const int d = tasks.num_tasks();
  if (task < 0 || task >= d || task2 < 0 || task2 >= d) {
    throw std::out_of_range("icm_covariance: task index out of range");
  }
  return tasks.factor.row(task).dot(tasks.factor.row(task2)) *
         rbf_covariance(x, x2, h);
}

Eigen::MatrixXd rbf_gram_serial(const Eigen::MatrixXd& points,
                                const SpatialHyperparams& h) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i) {
    gram(i, i) = h.output_variance;
    for (int j = 0; j < i; ++j) {
      const double v = h.output_variance *
                       std::exp(-0.5 * scaled_sqdist(points.row(i).transpose(),
                                                     points.row(j).transpose(),
                                                     h.lengthscales));
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  return gram;
}

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& points,
                         const SpatialHyperparams& h) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd gram(n, n);
  parallel_for_index(n, [&](std::size_t i) {
    gram(i, i) = h.output_variance;
    for (std::size_t j = 0; j < i; ++j) {
      const double v = h.output_variance *
                       std::exp(-0.5 * scaled_sqdist(points.row(i).transpose(),
                                                     points.row(j).transpose(),
                                                     h.lengthscales));
      gram(i, j) = v;
      gram(j, i) = v;
    }
  });
  return gram;
}

Eigen::MatrixXd icm_gram_serial(const Eigen::MatrixXd& points,
                                const std::vector<int>& tasks,
                                const TaskCovariance& task_cov,
                                const SpatialHyperparams& h) {
  const Eigen::MatrixXd b = task_cov.matrix();
  Eigen::MatrixXd gram = rbf_gram_serial(points, h);
  for (int i = 0; i < gram.rows(); ++i) {
    for (int j = 0; j < gram.cols(); ++j) {
      gram(i, j) *= b(tasks[i], tasks[j]);
    }
  }
  return gram;
}

Eigen::MatrixXd icm_gram(const Eigen::MatrixXd& points,
                         const std::vector<int>& tasks,
                         const TaskCovariance& task_cov,
                         const SpatialHyperparams& h) {
  if (static_cast<int>(tasks.size()) != points.rows()) {
    throw std::invalid_argument("icm_gram: task labels do not match points");
  }
  const int d = task_cov.num_tasks();
  for (int t : tasks) {
    if (t < 0 || t >= d) throw std::out_of_range("icm_gram: task index");
  }
  const Eigen::MatrixXd b = task_cov.matrix();
  Eigen::MatrixXd gram = rbf_gram(points, h);
  for (int i = 0; i < gram.rows(); ++i) {
    for (int j = 0; j < gram.cols(); ++j) {
      gram(i, j) *= b(tasks[i], tasks[j]);
    }
  }
  return gram;
}

Eigen::MatrixXd icm_cross(const Eigen::MatrixXd& query_points,
                          const std::vector<int>& query_tasks,
                          const Eigen::MatrixXd& points,
                          const std::vector<int>& tasks,
                          const TaskCovariance& task_cov,
                          const SpatialHyperparams& h) {
  const Eigen::MatrixXd b = task_cov.matrix();
  const int q = static_cast<int>(query_points.rows());
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd cross(q, n);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < n; ++j) {
      cross(i, j) =
          b(query_tasks[i], tasks[j]) * h.output_variance *
          std::exp(-0.5 * scaled_sqdist(query_points.row(i).transpose(),
                                        points.row(j).transpose(),
                                        h.lengthscales));
    }
  }
  return cross;
}

TaskStructure TaskStructure::full(int num_tasks, int rank) {
  if (rank < 1 || rank > num_tasks) {
    throw std::invalid_argument("TaskStructure: need 1 <= rank <= num_tasks");
  }
  TaskStructure s;
  s.kind = Kind::Full;
  s.num_tasks = num_tasks;
  s.rank = rank;
  return s;
}

TaskStructure TaskStructure::batch_composite(int num_tasks, int batch_rank) {
  if (num_tasks < 2) {
    throw std::invalid_argument("batch_composite: needs >= 2 tasks");
  }
  TaskStructure s;
  s.kind = Kind::BatchComposite;
  s.num_tasks = num_tasks;
  s.rank = 2;
  s.batch_rank = batch_rank;
  return s;
}

int TaskStructure::factor_parameter_count() const {
  if (kind == Kind::Full) return num_tasks * rank;
  if (batch_rank >= 2) return num_tasks * rank;
  // rows 0 and 1 free, one scale per later batch row
  return 4 + (num_tasks - 2);
}

int TaskStructure::offset_count() const {
  return kind == Kind::BatchComposite ? num_tasks - 1 : 0;
}

Eigen::MatrixXd TaskStructure::make_factor(const Eigen::VectorXd& params) const {
  if (params.size() != factor_parameter_count()) {
    throw std::invalid_argument("make_factor: wrong parameter count");
  }
  Eigen::MatrixXd f(num_tasks, rank);
  if (kind == Kind::Full || batch_rank >= 2) {
    for (int d = 0; d < num_tasks; ++d) {
      for (int p = 0; p < rank; ++p) f(d, p) = params[d * rank + p];
    }
    return f;
  }
  f.row(0) << params[0], params[1];
  f.row(1) << params[2], params[3];
  for (int k = 2; k < num_tasks; ++k) {
    f.row(k) = params[4 + (k - 2)] * f.row(1);
  }
  return f;
}

Eigen::VectorXd TaskStructure::extract_params(
    const Eigen::MatrixXd& factor) const {
  Eigen::VectorXd params(factor_parameter_count());
  if (kind == Kind::Full || batch_rank >= 2) {
    for (int d = 0; d < num_tasks; ++d) {
      for (int p = 0; p < rank; ++p) params[d * rank + p] = factor(d, p);
    }
    return params;
  }
  params[0] = factor(0, 0);
  params[1] = factor(0, 1);
  params[2] = factor(1, 0);
  params[3] = factor(1, 1);
  const double norm2 = factor.row(1).squaredNorm();
  for (int k = 2; k < num_tasks; ++k) {
    params[4 + (k - 2)] =
        norm2 > 0.0 ? factor.row(k).dot(factor.row(1)) / norm2 : 0.0;
  }
  return params;
}

std::vector<Eigen::MatrixXd> TaskStructure::factor_jacobian(
    const Eigen::VectorXd& params) const {
  std::vector<Eigen::MatrixXd> jac(factor_parameter_count(),
                                   Eigen::MatrixXd::Zero(num_tasks, rank));
  if (kind == Kind::Full || batch_rank >= 2) {
    for (int d = 0; d < num_tasks; ++d) {
      for (int p = 0; p < rank; ++p) jac[d * rank + p](d, p) = 1.0;
    }
    return jac;
  }
  jac[0](0, 0) = 1.0;
  jac[1](0, 1) = 1.0;
  // row-1 entries also feed every scaled batch row
  jac[2](1, 0) = 1.0;
  jac[3](1, 1) = 1.0;
  for (int k = 2; k < num_tasks; ++k) {
    const double scale = params[4 + (k - 2)];
    jac[2](k, 0) = scale;
    jac[3](k, 1) = scale;
    jac[4 + (k - 2)](k, 0) = params[2];
    jac[4 + (k - 2)](k, 1) = params[3];
  }
  return jac;
}

Eigen::VectorXd TaskStructure::make_offsets(
    const Eigen::VectorXd& offset_params) const {
  Eigen::VectorXd offsets = Eigen::VectorXd::Zero(num_tasks);
  if (offset_count() == 0) return offsets;
  if (offset_params.size() != offset_count()) {
    throw std::invalid_argument("make_offsets: wrong parameter count");
  }
  for (int k = 1; k < num_tasks; ++k) offsets[k] = offset_params[k - 1];
  return offsets;
}

Eigen::VectorXd HyperparamPacking::pack(const SpatialHyperparams& h,
                                        const TaskCovariance& tasks,
                                        const Eigen::VectorXd& offset_params) const {
  if (h.input_dim() != input_dim) {
    throw std::invalid_argument("pack: lengthscale count != input dim");
  }
  Eigen::VectorXd theta(size());
  theta[0] = std::log(h.output_variance);
  for (int j = 0; j < input_dim; ++j) theta[1 + j] = std::log(h.lengthscales[j]);
  theta.segment(factor_offset(), structure.factor_parameter_count()) =
      structure.extract_params(tasks.factor);
  theta.segment(mean_offset_offset(), structure.offset_count()) = offset_params;
  return theta;
}

void HyperparamPacking::unpack(const Eigen::VectorXd& theta,
                               SpatialHyperparams* h, TaskCovariance* tasks,
                               Eigen::VectorXd* task_offsets) const {
  if (theta.size() != size()) {
    throw std::invalid_argument("unpack: wrong vector length");
  }
  if (h != nullptr) {
    h->output_variance = std::exp(theta[0]);
    h->lengthscales = theta.segment(1, input_dim).array().exp();
  }
  if (tasks != nullptr) {
    tasks->factor = structure.make_factor(
        theta.segment(factor_offset(), structure.factor_parameter_count()));
  }
  if (task_offsets != nullptr) {
    *task_offsets = structure.make_offsets(
        theta.segment(mean_offset_offset(), structure.offset_count()));
  }
}

}  // namespace mtbo
