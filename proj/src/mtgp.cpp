#include "mtbo/mtgp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "mtbo/lbfgsb.hpp"
#include "mtbo/parallel.hpp"
#include "mtbo/rng.hpp"
#include "mtbo/sobol.hpp"

namespace mtbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct TrainingArrays {
  Eigen::MatrixXd points;
  std::vector<int> tasks;
  Eigen::VectorXd values;
  Eigen::VectorXd noise;
};

TrainingArrays training_arrays(const Dataset& data) {
  const int n = data.size();
  TrainingArrays arr;
  arr.points.resize(n, data.dim);
  arr.tasks.resize(n);
  arr.values.resize(n);
  arr.noise.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& obs = data.observations[i];
    arr.points.row(i) = obs.point.transpose();
    arr.tasks[i] = obs.task;
    arr.values[i] = obs.mean;
    arr.noise[i] = obs.noise_variance;
  }
  return arr;
}

// Cholesky of K + diag(noise) + jitter*I with the spec'd escalation. Returns
// the relative jitter actually used, or nullopt when even the ceiling fails.
std::optional<double> factorize_with_jitter(const Eigen::MatrixXd& kernel,
                                            const Eigen::VectorXd& noise,
                                            double mean_diag,
                                            Eigen::MatrixXd* sigma,
                                            Eigen::LLT<Eigen::MatrixXd>* llt) {
  for (double rel = kBaseJitterRel; rel <= kMaxJitterRel * 1.0000001;
       rel *= 10.0) {
    *sigma = kernel;
    sigma->diagonal() += noise;
    sigma->diagonal().array() += rel * mean_diag;
    llt->compute(*sigma);
    if (llt->info() == Eigen::Success) return rel;
  }
  return std::nullopt;
}

}  // namespace

LogMarginalResult log_marginal_likelihood(const Dataset& data,
                                          const HyperparamPacking& packing,
                                          const Eigen::VectorXd& theta) {
  LogMarginalResult res;
  res.gradient = Eigen::VectorXd::Zero(theta.size());
  if (data.size() == 0) throw std::invalid_argument("lml: empty dataset");

  SpatialHyperparams h;
  TaskCovariance tasks;
  Eigen::VectorXd offsets;
  packing.unpack(theta, &h, &tasks, &offsets);

  const TrainingArrays arr = training_arrays(data);
  const int n = data.size();
  const Eigen::MatrixXd kappa = rbf_gram(arr.points, h);
  const Eigen::MatrixXd b = tasks.matrix();

  Eigen::MatrixXd kernel(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      kernel(i, j) = b(arr.tasks[i], arr.tasks[j]) * kappa(i, j);
    }
  }
  const double mean_diag = kernel.diagonal().mean();

  Eigen::MatrixXd sigma;
  Eigen::LLT<Eigen::MatrixXd> llt;
  const auto rel = factorize_with_jitter(kernel, arr.noise, mean_diag, &sigma, &llt);
  if (!rel) {
    res.rejected = true;
    return res;
  }
  const double jitter = *rel * mean_diag;

  Eigen::VectorXd mean(n);
  for (int i = 0; i < n; ++i) mean[i] = offsets[arr.tasks[i]];
  const Eigen::VectorXd r = arr.values - mean;
  const Eigen::VectorXd alpha = llt.solve(r);

  const Eigen::MatrixXd& chol = llt.matrixLLT();
  double log_det_half = 0.0;
  for (int i = 0; i < n; ++i) log_det_half += std::log(chol(i, i));
  res.value = -0.5 * r.dot(alpha) - log_det_half - 0.5 * n * kLog2Pi;
  if (!std::isfinite(res.value)) {
    res.rejected = true;
    res.value = -std::numeric_limits<double>::infinity();
    return res;
  }

  // d logp / d theta = 1/2 tr((alpha alpha^T - Sigma^{-1}) dSigma) plus the
  // prior-mean terms; the jitter term tracks the kernel diagonal exactly so
  // finite differences through the jitter rule agree.
  const Eigen::MatrixXd sigma_inv =
      llt.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd w = alpha * alpha.transpose() - sigma_inv;
  const double tr_w = w.trace();

  // log tau^2: dSigma = kernel + jitter*I
  res.gradient[0] = 0.5 * (w.cwiseProduct(kernel).sum() + tr_w * jitter);

  // log lengthscales: dSigma_ab = K_ab * ((x_aj - x_bj)/ell_j)^2
  const int m = packing.input_dim;
  for (int a = 0; a < n; ++a) {
    for (int c = a + 1; c < n; ++c) {
      const double wk = 2.0 * w(a, c) * kernel(a, c);
      for (int j = 0; j < m; ++j) {
        const double d = (arr.points(a, j) - arr.points(c, j)) / h.lengthscales[j];
        res.gradient[1 + j] += 0.5 * wk * d * d;
      }
    }
  }

  // Task factor parameters, grouped by task pair: G(t,t') = sum W_ab kappa_ab.
  const int num_tasks = packing.structure.num_tasks;
  Eigen::MatrixXd g_by_task = Eigen::MatrixXd::Zero(num_tasks, num_tasks);
  Eigen::VectorXd diag_count = Eigen::VectorXd::Zero(num_tasks);
  for (int a = 0; a < n; ++a) {
    diag_count[arr.tasks[a]] += 1.0;
    for (int c = 0; c < n; ++c) {
      g_by_task(arr.tasks[a], arr.tasks[c]) += w(a, c) * kappa(a, c);
    }
  }
  const Eigen::VectorXd factor_params = theta.segment(
      packing.factor_offset(), packing.structure.factor_parameter_count());
  const auto jac = packing.structure.factor_jacobian(factor_params);
  for (std::size_t p = 0; p < jac.size(); ++p) {
    const Eigen::MatrixXd db =
        jac[p] * tasks.factor.transpose() + tasks.factor * jac[p].transpose();
    double acc = db.cwiseProduct(g_by_task).sum();
    // jitter follows the mean kernel diagonal
    double d_mean_diag = 0.0;
    for (int t = 0; t < num_tasks; ++t) {
      d_mean_diag += diag_count[t] * db(t, t) * h.output_variance;
    }
    d_mean_diag /= n;
    acc += tr_w * *rel * d_mean_diag;
    res.gradient[packing.factor_offset() + static_cast<int>(p)] = 0.5 * acc;
  }

  // Per-task mean offsets (task 0 pinned).
  for (int k = 0; k < packing.structure.offset_count(); ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      if (arr.tasks[i] == k + 1) acc += alpha[i];
    }
    res.gradient[packing.mean_offset_offset() + k] = acc;
  }

  return res;
}

FittedModel FittedModel::build(const Dataset& raw,
                               const Standardization& std_tf,
                               const SpatialHyperparams& spatial,
                               const TaskCovariance& tasks,
                               const Eigen::VectorXd& offsets,
                               const TaskStructure& structure, double log_ml,
                               std::optional<double> jitter_override) {
  FittedModel model;
  model.raw_data_ = raw;
  model.standardization_ = std_tf;
  model.spatial_ = spatial;
  model.tasks_ = tasks;
  model.offsets_ = offsets.size() > 0
                       ? offsets
                       : Eigen::VectorXd::Zero(tasks.num_tasks());
  model.structure_ = structure;

  const Dataset data_std = std_tf.apply(raw);
  const TrainingArrays arr = training_arrays(data_std);
  model.points_ = arr.points;
  model.train_tasks_ = arr.tasks;
  model.values_ = arr.values;
  model.noise_ = arr.noise;

  const int n = data_std.size();
  model.mean_.resize(n);
  for (int i = 0; i < n; ++i) model.mean_[i] = model.offsets_[arr.tasks[i]];

  const Eigen::MatrixXd kernel =
      icm_gram(arr.points, arr.tasks, tasks, spatial);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (jitter_override) {
    model.jitter_ = *jitter_override;
    model.sigma_ = kernel;
    model.sigma_.diagonal() += arr.noise;
    model.sigma_.diagonal().array() += model.jitter_;
    llt.compute(model.sigma_);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("FittedModel: factorization failed");
    }
  } else {
    const double mean_diag = kernel.diagonal().mean();
    const auto rel = factorize_with_jitter(kernel, arr.noise, mean_diag,
                                           &model.sigma_, &llt);
    if (!rel) throw std::runtime_error("FittedModel: factorization failed");
    model.jitter_ = *rel * mean_diag;
  }
  model.chol_ = llt.matrixL();
  model.alpha_ = llt.solve(model.values_ - model.mean_);

  if (std::isfinite(log_ml)) {
    model.log_marginal_ = log_ml;
  } else {
    const Eigen::VectorXd r = model.values_ - model.mean_;
    double log_det_half = 0.0;
    for (int i = 0; i < n; ++i) log_det_half += std::log(model.chol_(i, i));
    model.log_marginal_ =
        -0.5 * r.dot(model.alpha_) - log_det_half - 0.5 * n * kLog2Pi;
  }
  return model;
}

FittedModel FittedModel::with_hyperparameters(const Dataset& data,
                                              const SpatialHyperparams& spatial,
                                              const TaskCovariance& tasks,
                                              const Eigen::VectorXd& task_offsets,
                                              const ModelOptions& opts) {
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("model: empty dataset");
  const Standardization std_tf = opts.standardize
                                     ? Standardization::fit_to(data)
                                     : Standardization::identity(
                                           std::max(tasks.num_tasks(), 1));
  TaskStructure structure =
      TaskStructure::full(tasks.num_tasks(), tasks.rank_bound());
  return build(data, std_tf, spatial, tasks, task_offsets, structure,
               std::numeric_limits<double>::quiet_NaN(), opts.jitter_override);
}

FittedModel FittedModel::fit(const Dataset& data, const FitOptions& opts) {
  data.validate();
  if (data.size() < 2) {
    throw std::invalid_argument("fit: need at least 2 observations");
  }
  const int num_tasks = data.num_tasks();
  for (int t = 0; t < num_tasks; ++t) {
    if (data.indices_of_task(t).empty()) {
      throw std::invalid_argument("fit: task ids must be dense");
    }
  }

  TaskStructure structure =
      opts.structure.value_or(TaskStructure::full(
          num_tasks,
          opts.rank <= 0 ? num_tasks : std::min(opts.rank, num_tasks)));
  const HyperparamPacking packing{data.dim, structure};

  const Standardization std_tf = opts.standardize
                                     ? Standardization::fit_to(data)
                                     : Standardization::identity(num_tasks);
  const Dataset data_std = std_tf.apply(data);

  const int dim = data.dim;
  const int n_params = packing.size();
  BoxBounds bounds = BoxBounds::unbounded(n_params);
  bounds.lower[0] = opts.log_output_var_lo;
  bounds.upper[0] = opts.log_output_var_hi;
  for (int j = 0; j < dim; ++j) {
    bounds.lower[1 + j] = opts.log_lengthscale_lo;
    bounds.upper[1 + j] = opts.log_lengthscale_hi;
  }

  // Canonical start: mid lengthscales, strongly correlated tasks.
  const int rank = structure.rank;
  Eigen::MatrixXd canon_factor = Eigen::MatrixXd::Zero(num_tasks, rank);
  canon_factor.col(0).setConstant(0.9);
  if (rank > 1) {
    for (int d = 0; d < num_tasks; ++d) {
      if (structure.kind == TaskStructure::Kind::BatchComposite && d >= 2) {
        canon_factor.row(d) = canon_factor.row(1);
        continue;
      }
      const int col = 1 + ((d + rank - 1) % (rank - 1));
      if (d > 0 && col < rank) canon_factor(d, col) = 0.45;
    }
  }
  Eigen::VectorXd canonical(n_params);
  canonical[0] = 0.0;
  for (int j = 0; j < dim; ++j) canonical[1 + j] = std::log(0.5);
  canonical.segment(packing.factor_offset(), structure.factor_parameter_count()) =
      structure.extract_params(canon_factor);
  canonical.segment(packing.mean_offset_offset(), structure.offset_count())
      .setZero();

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(canonical);
  if (opts.restarts > 1) {
    SobolSequence seq(std::min(n_params, SobolSequence::kMaxDimension),
                      derive_seed(opts.seed, 0x66697473ULL));
    for (int r = 1; r < opts.restarts; ++r) {
      const auto& u = seq.next();
      Eigen::VectorXd start(n_params);
      auto coord = [&](int i) { return u[i % u.size()]; };
      start[0] = std::log(0.1) + coord(0) * (std::log(10.0) - std::log(0.1));
      for (int j = 0; j < dim; ++j) {
        start[1 + j] =
            std::log(0.05) + coord(1 + j) * (std::log(2.0) - std::log(0.05));
      }
      for (int p = 0; p < structure.factor_parameter_count(); ++p) {
        start[packing.factor_offset() + p] =
            -1.5 + 3.0 * coord(packing.factor_offset() + p);
      }
      for (int k = 0; k < structure.offset_count(); ++k) {
        start[packing.mean_offset_offset() + k] =
            -0.5 + coord(packing.mean_offset_offset() + k);
      }
      starts.push_back(std::move(start));
    }
  }
  if (opts.extra_start && opts.extra_start->size() == n_params) {
    starts.push_back(*opts.extra_start);
  }

  // Penalized marginal likelihood: a weak log-normal pull (sd 1) on the
  // effective output scale tau^2 * mean(B_dd). Pure ML-II collapses the scale
  // on tiny subsamples, which wrecks the small-n learning-curve behavior the
  // model is used for; on standardized data the pull is centered correctly.
  const auto objective = [&](const Eigen::VectorXd& theta,
                             Eigen::VectorXd& grad) -> double {
    const LogMarginalResult lml = log_marginal_likelihood(data_std, packing, theta);
    if (lml.rejected) {
      grad.setZero();
      return std::numeric_limits<double>::infinity();
    }
    grad = -lml.gradient;
    double value = -lml.value;

    TaskCovariance tasks;
    packing.unpack(theta, nullptr, &tasks, nullptr);
    const Eigen::MatrixXd b = tasks.matrix();
    const double mean_var = b.diagonal().mean();
    if (mean_var > 0.0) {
      const double s = theta[0] + std::log(mean_var);
      value += 0.5 * s * s;
      grad[0] += s;
      const Eigen::VectorXd factor_params = theta.segment(
          packing.factor_offset(), structure.factor_parameter_count());
      const auto jac = structure.factor_jacobian(factor_params);
      for (std::size_t p = 0; p < jac.size(); ++p) {
        const Eigen::MatrixXd db = jac[p] * tasks.factor.transpose() +
                                   tasks.factor * jac[p].transpose();
        grad[packing.factor_offset() + static_cast<int>(p)] +=
            s * db.diagonal().mean() / mean_var;
      }
    }
    // Matching weak pull on the log lengthscales (center 0.5, sd 0.75 in log
    // space), comparable to the Gamma(3, 6) defaults common in GP stacks.
    constexpr double ell_center = -0.6931471805599453;  // log 0.5
    constexpr double ell_inv_var = 1.0 / (0.75 * 0.75);
    for (int j = 0; j < dim; ++j) {
      const double dlog = theta[1 + j] - ell_center;
      value += 0.5 * ell_inv_var * dlog * dlog;
      grad[1 + j] += ell_inv_var * dlog;
    }
    return value;
  };

  std::vector<double> values(starts.size(),
                             std::numeric_limits<double>::infinity());
  std::vector<Eigen::VectorXd> solutions(starts.size());
  parallel_for_index(
      starts.size(),
      [&](std::size_t i) {
        LbfgsOptions lopt;
        lopt.max_iterations = 200;
        const OptimizeResult r = minimize_bounded(objective, starts[i], bounds, lopt);
        if (std::isfinite(r.value)) {
          values[i] = r.value;
          solutions[i] = r.x;
        }
      },
      opts.parallel);

  int best = -1;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (std::isfinite(values[i]) && (best < 0 || values[i] < values[best])) {
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw std::runtime_error("fit failed");

  SpatialHyperparams h;
  TaskCovariance tasks;
  Eigen::VectorXd offset_params;
  packing.unpack(solutions[best], &h, &tasks, &offset_params);
  const Eigen::VectorXd offsets = structure.make_offsets(
      solutions[best].segment(packing.mean_offset_offset(),
                              structure.offset_count()));
  // Store the plain (unpenalized) log marginal; build() recomputes it.
  return build(data, std_tf, h, tasks, offsets, structure,
               std::numeric_limits<double>::quiet_NaN(), std::nullopt);
}

Eigen::VectorXd FittedModel::packed_hyperparams() const {
  const HyperparamPacking packing{raw_data_.dim, structure_};
  Eigen::VectorXd offset_params(structure_.offset_count());
  for (int k = 0; k < structure_.offset_count(); ++k) {
    offset_params[k] = offsets_[k + 1];
  }
  return packing.pack(spatial_, tasks_, offset_params);
}

PosteriorPrediction FittedModel::posterior_standardized(
    const Eigen::MatrixXd& query_points,
    const std::vector<int>& query_tasks) const {
  if (query_points.cols() != points_.cols()) {
    throw std::invalid_argument("posterior: query dimension mismatch");
  }
  for (int t : query_tasks) {
    if (t < 0 || t >= num_tasks()) {
      throw std::out_of_range("posterior: task index out of range");
    }
  }
  const int q = static_cast<int>(query_points.rows());
  const Eigen::MatrixXd cross = icm_cross(query_points, query_tasks, points_,
                                          train_tasks_, tasks_, spatial_);
  PosteriorPrediction out;
  out.mean.resize(q);
  for (int i = 0; i < q; ++i) out.mean[i] = offsets_[query_tasks[i]];
  out.mean += cross * alpha_;

  const Eigen::MatrixXd prior = icm_gram(query_points, query_tasks, tasks_, spatial_);
  const Eigen::MatrixXd half =
      chol_.triangularView<Eigen::Lower>().solve(cross.transpose());
  out.covariance = prior - half.transpose() * half;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  for (int i = 0; i < q; ++i) {
    if (out.covariance(i, i) < 0.0) out.covariance(i, i) = 0.0;
  }
  return out;
}

PosteriorPrediction FittedModel::posterior(
    const Eigen::MatrixXd& query_points,
    const std::vector<int>& query_tasks) const {
  PosteriorPrediction p = posterior_standardized(query_points, query_tasks);
  const int q = static_cast<int>(p.mean.size());
  for (int i = 0; i < q; ++i) {
    p.mean[i] = standardization_.to_raw_mean(p.mean[i], query_tasks[i]);
  }
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      p.covariance(i, j) *= standardization_.scale[query_tasks[i]] *
                            standardization_.scale[query_tasks[j]];
    }
  }
  return p;
}

double FittedModel::inter_task_correlation(int d, int d2) const {
  const Eigen::MatrixXd b = tasks_.matrix();
  if (d < 0 || d >= b.rows() || d2 < 0 || d2 >= b.rows()) {
    throw std::out_of_range("inter_task_correlation: task index");
  }
  const double vd = b(d, d), vd2 = b(d2, d2);
  if (vd <= 0.0 || vd2 <= 0.0) {
    throw std::runtime_error("inter_task_correlation: degenerate task");
  }
  return b(d, d2) / std::sqrt(vd * vd2);
}

LooResult loo_cross_validation(const Dataset& data, int target_task,
                               const FitOptions& opts) {
  const auto target_idx = data.indices_of_task(target_task);
  if (target_idx.size() < 3) {
    throw std::invalid_argument("loo: target task needs >= 3 observations");
  }

  // Standardize once on the full data so fold errors share a scale.
  const Standardization std_tf =
      opts.standardize ? Standardization::fit_to(data)
                       : Standardization::identity(data.num_tasks());
  const Dataset data_std = std_tf.apply(data);

  FitOptions fold_opts = opts;
  fold_opts.standardize = false;
  const FittedModel full = FittedModel::fit(data_std, fold_opts);
  fold_opts.extra_start = full.packed_hyperparams();

  LooResult res;
  res.points.resize(target_idx.size());
  std::vector<std::exception_ptr> errors(target_idx.size());
  parallel_for_index(
      target_idx.size(),
      [&](std::size_t f) {
        try {
          const int held_out = target_idx[f];
          std::vector<int> keep;
          for (int i = 0; i < data_std.size(); ++i) {
            if (i != held_out) keep.push_back(i);
          }
          FitOptions one = fold_opts;
          one.parallel = false;
          one.seed = derive_seed(opts.seed, 0x6c6f6fULL + f);
          const FittedModel m = FittedModel::fit(data_std.subset(keep), one);
          const auto& obs = data_std.observations[held_out];
          Eigen::MatrixXd qp(1, data_std.dim);
          qp.row(0) = obs.point.transpose();
          const auto pred = m.posterior_standardized(qp, {obs.task});
          res.points[f] = LooPoint{held_out, pred.mean[0], pred.covariance(0, 0),
                                   obs.mean};
        } catch (...) {
          errors[f] = std::current_exception();
        }
      },
      opts.parallel);
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  double mse = 0.0;
  for (const auto& p : res.points) {
    mse += (p.predicted_mean - p.actual) * (p.predicted_mean - p.actual);
  }
  res.mse = mse / static_cast<double>(res.points.size());
  return res;
}

Eigen::VectorXd sample_icm_prior(const Eigen::MatrixXd& points,
                                 const std::vector<int>& tasks,
                                 const TaskCovariance& task_cov,
                                 const SpatialHyperparams& h,
                                 std::uint64_t seed) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd kernel = icm_gram(points, tasks, task_cov, h);
  const double mean_diag = kernel.diagonal().mean();
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (double rel = 1e-12; rel <= 1.0; rel *= 10.0) {
    Eigen::MatrixXd k = kernel;
    k.diagonal().array() += rel * std::max(mean_diag, 1e-300);
    llt.compute(k);
    if (llt.info() == Eigen::Success) break;
  }
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("sample_icm_prior: factorization failed");
  }
  auto eng = make_engine(seed, 0x70726972ULL);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = normal_draw(eng);
  return Eigen::MatrixXd(llt.matrixL()) * z;
}

std::pair<Dataset, std::vector<int>> compact_tasks(const Dataset& data) {
  std::map<int, int> remap;
  for (const auto& obs : data.observations) remap.emplace(obs.task, 0);
  std::vector<int> old_ids;
  for (auto& [old_id, new_id] : remap) {
    new_id = static_cast<int>(old_ids.size());
    old_ids.push_back(old_id);
  }
  Dataset out = data;
  for (auto& obs : out.observations) obs.task = remap[obs.task];
  return {std::move(out), std::move(old_ids)};
}

}  // namespace mtbo
