#include "mtbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mtbo/parallel.hpp"
#include "mtbo/rng.hpp"
#include "mtbo/sobol.hpp"

namespace mtbo {

namespace {

// Analytic EI of N(mean, sd^2) over incumbent, truncated at zero improvement.
double expected_improvement(double mean, double sd, double incumbent) {
  const double delta = mean - incumbent;
  if (sd <= 0.0) return std::max(delta, 0.0);
  const double z = delta / sd;
  return delta * standard_normal_cdf(z) + sd * standard_normal_pdf(z);
}

double feasibility_probability(double mean, double sd) {
  if (sd <= 0.0) return mean >= 0.0 ? 1.0 : 0.0;
  return standard_normal_cdf(mean / sd);
}

// Lower Cholesky with a diagonal floor; tolerates semidefinite input from
// duplicated conditioning points.
Eigen::MatrixXd chol_with_floor(Eigen::MatrixXd a, double floor_value) {
  const int n = static_cast<int>(a.rows());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    d = std::max(d, floor_value);
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      const double v =
          (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
      l(i, j) = v;
    }
  }
  return l;
}

}  // namespace

struct NoisyEiContext::Impl {
  struct ModelContext {
    const FittedModel* model = nullptr;
    Eigen::MatrixXd points;  // conditioning locations (train + X_T + fantasies)
    std::vector<int> tasks;
    Eigen::MatrixXd chol;    // lower factor of the conditioning covariance
    Eigen::MatrixXd rhs;     // (values - prior mean), one column per sample
    Eigen::MatrixXd alphas;  // chol^-T chol^-1 rhs
    double shift = 0.0;      // online-task raw transform
    double scale = 1.0;
    double prior_mean = 0.0;  // standardized prior mean at the online task

    void resolve() {
      alphas = chol.triangularView<Eigen::Lower>().solve(rhs);
      chol.transpose().triangularView<Eigen::Upper>().solveInPlace(alphas);
    }

    // Extends the factor by one conditioning row at (x, online task) carrying
    // per-sample values (standardized). Returns (u, sd) of the pre-append
    // conditional at x for reuse.
    void append(const Eigen::VectorXd& x, int online_task,
                const Eigen::RowVectorXd& values_std) {
      const int n = static_cast<int>(points.rows());
      Eigen::MatrixXd xrow(1, x.size());
      xrow.row(0) = x.transpose();
      const Eigen::MatrixXd kvec =
          icm_cross(xrow, {online_task}, points, tasks, model->tasks(),
                    model->spatial());
      const Eigen::VectorXd u =
          chol.triangularView<Eigen::Lower>().solve(kvec.transpose());
      const double kxx = model->tasks().matrix()(online_task, online_task) *
                         model->spatial().output_variance;
      const double d2 = std::max(kxx - u.squaredNorm(), 1e-12 * kxx);

      Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(n + 1, n + 1);
      grown.topLeftCorner(n, n) = chol;
      grown.row(n).head(n) = u.transpose();
      grown(n, n) = std::sqrt(d2);
      chol = std::move(grown);

      points.conservativeResize(n + 1, Eigen::NoChange);
      points.row(n) = x.transpose();
      tasks.push_back(online_task);

      rhs.conservativeResize(n + 1, Eigen::NoChange);
      rhs.row(n) = values_std.array() - prior_mean;
      resolve();
    }

    // Conditional (mean per sample, shared sd), standardized scale.
    void predict(const Eigen::VectorXd& x, int online_task,
                 Eigen::RowVectorXd* mean_std, double* sd_std) const {
      Eigen::MatrixXd xrow(1, x.size());
      xrow.row(0) = x.transpose();
      const Eigen::MatrixXd kvec =
          icm_cross(xrow, {online_task}, points, tasks, model->tasks(),
                    model->spatial());
      const Eigen::VectorXd u =
          chol.triangularView<Eigen::Lower>().solve(kvec.transpose());
      const double kxx = model->tasks().matrix()(online_task, online_task) *
                         model->spatial().output_variance;
      const double var = std::max(kxx - u.squaredNorm(), 0.0);
      *sd_std = std::sqrt(var);
      *mean_std = (kvec * alphas).array() + prior_mean;
    }
  };

  int samples = 0;
  int online_task = 0;
  int dim = 0;
  std::vector<ModelContext> ctx;       // [0] objective, then constraints
  Eigen::VectorXd incumbent_raw;       // per sample; valid where has_incumbent
  std::vector<char> has_incumbent;
  std::vector<Eigen::MatrixXd> sampled_raw;  // per model: k x S at X_T
};

NoisyEiContext::NoisyEiContext(const ModelSet& models,
                               const Eigen::MatrixXd& online_points,
                               const QMCConfig& qmc)
    : impl_(std::make_unique<Impl>()) {
  if (online_points.rows() == 0) {
    throw std::invalid_argument("noisy_ei: online point set is empty");
  }
  if (qmc.sample_count < 8) {
    throw std::invalid_argument("noisy_ei: sample_count must be >= 8");
  }
  const int k = static_cast<int>(online_points.rows());
  const int s = qmc.sample_count;
  const int n_models = 1 + static_cast<int>(models.constraints.size());
  impl_->samples = s;
  impl_->online_task = models.online_task;
  impl_->dim = static_cast<int>(online_points.cols());

  // Joint base samples: one scrambled-Sobol block of k normals per model,
  // mapped through each model's joint posterior factor at the online points.
  SobolSequence seq(n_models * k, derive_seed(qmc.sequence_seed, 0x6e6569ULL));
  Eigen::MatrixXd z(n_models * k, s);
  for (int col = 0; col < s; ++col) {
    const auto& u = seq.next();
    for (int r = 0; r < n_models * k; ++r) {
      z(r, col) = standard_normal_quantile(u[r]);
    }
  }

  const std::vector<int> online_tasks(k, models.online_task);
  auto& sampled_raw = impl_->sampled_raw;
  sampled_raw.resize(n_models);

  for (int mi = 0; mi < n_models; ++mi) {
    const FittedModel& model =
        mi == 0 ? models.objective : models.constraints[mi - 1];
    Impl::ModelContext c;
    c.model = &model;
    c.shift = model.standardization().shift[models.online_task];
    c.scale = model.standardization().scale[models.online_task];
    c.prior_mean = model.task_mean_offsets()[models.online_task];

    const int n = static_cast<int>(model.train_points().rows());
    c.points.resize(n + k, impl_->dim);
    c.points.topRows(n) = model.train_points();
    c.points.bottomRows(k) = online_points;
    c.tasks = model.train_tasks();
    c.tasks.insert(c.tasks.end(), online_tasks.begin(), online_tasks.end());

    // Bordered extension of the model's stored factor by the (noiseless)
    // online block.
    const Eigen::MatrixXd cross =
        icm_cross(online_points, online_tasks, model.train_points(),
                  model.train_tasks(), model.tasks(), model.spatial());
    const Eigen::MatrixXd m_block =
        model.chol_lower().triangularView<Eigen::Lower>().solve(
            cross.transpose());  // n x k
    const Eigen::MatrixXd k_tt = icm_gram(online_points, online_tasks,
                                          model.tasks(), model.spatial());
    const Eigen::MatrixXd schur = k_tt - m_block.transpose() * m_block;
    const double floor_value = 1e-12 * std::max(k_tt.diagonal().mean(), 1e-300);
    const Eigen::MatrixXd l_tt =
        chol_with_floor(0.5 * (schur + schur.transpose()), floor_value);
    c.chol = Eigen::MatrixXd::Zero(n + k, n + k);
    c.chol.topLeftCorner(n, n) = model.chol_lower();
    c.chol.bottomLeftCorner(k, n) = m_block.transpose();
    c.chol.bottomRightCorner(k, k) = l_tt;

    // Joint posterior draws at the online points (standardized).
    const auto post = model.posterior_standardized(online_points, online_tasks);
    Eigen::MatrixXd values_std(k, s);
    for (int col = 0; col < s; ++col) {
      values_std.col(col) =
          post.mean + l_tt * z.block(mi * k, col, k, 1);
    }
    sampled_raw[mi] = (values_std.array() * c.scale + c.shift).matrix();

    c.rhs.resize(n + k, s);
    for (int col = 0; col < s; ++col) {
      c.rhs.col(col).head(n) = model.train_values() - model.prior_mean();
      c.rhs.col(col).tail(k) = values_std.col(col).array() - c.prior_mean;
    }
    c.resolve();
    impl_->ctx.push_back(std::move(c));
  }

  // Per-sample best feasible online value, on the raw scale.
  impl_->incumbent_raw = Eigen::VectorXd::Zero(s);
  impl_->has_incumbent.assign(s, 0);
  for (int col = 0; col < s; ++col) {
    for (int t = 0; t < k; ++t) {
      bool feasible = true;
      for (int j = 1; j < n_models; ++j) {
        if (sampled_raw[j](t, col) < 0.0) {
          feasible = false;
          break;
        }
      }
      if (!feasible) continue;
      const double v = sampled_raw[0](t, col);
      if (!impl_->has_incumbent[col] || v > impl_->incumbent_raw[col]) {
        impl_->has_incumbent[col] = 1;
        impl_->incumbent_raw[col] = v;
      }
    }
  }
}

NoisyEiContext::~NoisyEiContext() = default;
NoisyEiContext::NoisyEiContext(NoisyEiContext&&) noexcept = default;
NoisyEiContext& NoisyEiContext::operator=(NoisyEiContext&&) noexcept = default;

int NoisyEiContext::sample_count() const { return impl_->samples; }

Eigen::MatrixXd NoisyEiContext::sampled_values(int model_index) const {
  return impl_->sampled_raw.at(model_index);
}

std::pair<Eigen::VectorXd, std::vector<char>> NoisyEiContext::incumbents()
    const {
  return {impl_->incumbent_raw, impl_->has_incumbent};
}

AcquisitionValue NoisyEiContext::evaluate(const Eigen::VectorXd& x) const {
  const int s = impl_->samples;
  const int n_models = static_cast<int>(impl_->ctx.size());

  Eigen::RowVectorXd obj_mean_raw;
  double obj_sd_raw = 0.0;
  std::vector<Eigen::RowVectorXd> con_mean_raw(n_models - 1);
  std::vector<double> con_sd_raw(n_models - 1);

  for (int mi = 0; mi < n_models; ++mi) {
    Eigen::RowVectorXd mean_std;
    double sd_std = 0.0;
    impl_->ctx[mi].predict(x, impl_->online_task, &mean_std, &sd_std);
    const double scale = impl_->ctx[mi].scale;
    Eigen::RowVectorXd mean_raw =
        (mean_std.array() * scale + impl_->ctx[mi].shift).matrix();
    if (mi == 0) {
      obj_mean_raw = std::move(mean_raw);
      obj_sd_raw = sd_std * scale;
    } else {
      con_mean_raw[mi - 1] = std::move(mean_raw);
      con_sd_raw[mi - 1] = sd_std * scale;
    }
  }

  AcquisitionValue out;
  out.per_sample.resize(s);
  double acc = 0.0;
  for (int col = 0; col < s; ++col) {
    double p_feas = 1.0;
    for (int j = 0; j < n_models - 1; ++j) {
      p_feas *= feasibility_probability(con_mean_raw[j][col], con_sd_raw[j]);
    }
    double v;
    if (impl_->has_incumbent[col]) {
      v = p_feas * expected_improvement(obj_mean_raw[col], obj_sd_raw,
                                        impl_->incumbent_raw[col]);
    } else {
      v = p_feas;  // feasibility-seeking fallback
    }
    out.per_sample[col] = v;
    acc += v;
  }
  out.value = acc / static_cast<double>(s);
  return out;
}

void NoisyEiContext::append_fantasy(const Eigen::VectorXd& x,
                                    std::uint64_t seed) {
  const int s = impl_->samples;
  const int n_models = static_cast<int>(impl_->ctx.size());
  std::vector<Eigen::RowVectorXd> drawn_raw(n_models);

  for (int mi = 0; mi < n_models; ++mi) {
    auto& c = impl_->ctx[mi];
    Eigen::RowVectorXd mean_std;
    double sd_std = 0.0;
    c.predict(x, impl_->online_task, &mean_std, &sd_std);
    auto eng = make_engine(seed, 0xfa000ULL + mi);
    Eigen::RowVectorXd values_std(s);
    for (int col = 0; col < s; ++col) {
      values_std[col] = mean_std[col] + sd_std * normal_draw(eng);
    }
    drawn_raw[mi] = (values_std.array() * c.scale + c.shift).matrix();
    c.append(x, impl_->online_task, values_std);
  }

  for (int col = 0; col < s; ++col) {
    bool feasible = true;
    for (int j = 1; j < n_models; ++j) {
      if (drawn_raw[j][col] < 0.0) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;
    const double v = drawn_raw[0][col];
    if (!impl_->has_incumbent[col] || v > impl_->incumbent_raw[col]) {
      impl_->has_incumbent[col] = 1;
      impl_->incumbent_raw[col] = v;
    }
  }
}

AcquisitionValue noisy_ei(const Eigen::VectorXd& x, const ModelSet& models,
                          const Eigen::MatrixXd& online_points,
                          const QMCConfig& qmc) {
  NoisyEiContext ctx(models, online_points, qmc);
  return ctx.evaluate(x);
}

std::vector<Eigen::VectorXd> generate_candidates(
    const ModelSet& models, const Eigen::MatrixXd& online_points,
    const BoxBounds& bounds, int n_o, const QMCConfig& qmc,
    std::uint64_t seed) {
  if (n_o < 1) throw std::invalid_argument("generate_candidates: n_o >= 1");
  const int dim = static_cast<int>(online_points.cols());
  NoisyEiContext ctx(models, online_points, qmc);

  constexpr int kRestarts = 20;
  std::vector<Eigen::VectorXd> candidates;

  for (int cand = 0; cand < n_o; ++cand) {
    Eigen::VectorXd best_x;
    double best_val = -std::numeric_limits<double>::infinity();

    for (int attempt = 0; attempt < 3 && !best_x.size(); ++attempt) {
      SobolSequence starts(dim,
                           derive_seed(seed, 0xac0000ULL + cand * 8 + attempt));
      std::vector<Eigen::VectorXd> xs(kRestarts);
      std::vector<double> vals(kRestarts,
                               -std::numeric_limits<double>::infinity());
      std::vector<Eigen::VectorXd> start_points(kRestarts);
      for (int r = 0; r < kRestarts; ++r) {
        const auto& u = starts.next();
        Eigen::VectorXd x0(dim);
        for (int j = 0; j < dim; ++j) {
          x0[j] = bounds.lower[j] + u[j] * (bounds.upper[j] - bounds.lower[j]);
        }
        start_points[r] = std::move(x0);
      }
      parallel_for_index(kRestarts, [&](std::size_t r) {
        const auto value_only = [&](const Eigen::VectorXd& x) {
          return -ctx.evaluate(x).value;
        };
        const auto objective = [&](const Eigen::VectorXd& x,
                                   Eigen::VectorXd& grad) -> double {
          const double f = value_only(x);
          constexpr double h = 1e-6;
          Eigen::VectorXd xp = x;
          for (int j = 0; j < x.size(); ++j) {
            const double orig = xp[j];
            xp[j] = orig + h;
            const double fp = value_only(xp);
            xp[j] = orig - h;
            const double fm = value_only(xp);
            xp[j] = orig;
            grad[j] = (fp - fm) / (2.0 * h);
          }
          return f;
        };
        LbfgsOptions lopt;
        lopt.max_iterations = 40;
        lopt.gradient_tolerance = 1e-8;
        const OptimizeResult r2 =
            minimize_bounded(objective, value_only, start_points[r], bounds, lopt);
        if (std::isfinite(r2.value)) {
          xs[r] = r2.x;
          vals[r] = -r2.value;
        }
      });
      for (int r = 0; r < kRestarts; ++r) {
        if (xs[r].size() && vals[r] > best_val) {
          best_val = vals[r];
          best_x = xs[r];
        }
      }
    }
    if (!best_x.size()) {
      throw std::runtime_error("generate_candidates: acquisition ascent failed");
    }

    // Enforce pairwise separation by deterministic perturbation.
    auto eng = make_engine(seed, 0x9e9e00ULL + cand);
    for (int tries = 0; tries < 100; ++tries) {
      bool clash = false;
      for (const auto& prev : candidates) {
        if ((best_x - prev).norm() < 1e-6) {
          clash = true;
          break;
        }
      }
      if (!clash) break;
      Eigen::VectorXd jitter(dim);
      for (int j = 0; j < dim; ++j) jitter[j] = (uniform01(eng) - 0.5) * 2e-5;
      const Eigen::VectorXd moved = bounds.clip(best_x + jitter);
      if ((moved - best_x).norm() == 0.0) break;  // degenerate bounds
      best_x = moved;
    }

    ctx.append_fantasy(best_x, derive_seed(seed, 0xfade00ULL + cand));
    candidates.push_back(std::move(best_x));
  }
  return candidates;
}

std::vector<int> thompson_select(const ModelSet& models,
                                 const std::vector<Eigen::VectorXd>& candidates,
                                 int n_t, int draws, std::uint64_t seed) {
  const int q = static_cast<int>(candidates.size());
  if (n_t > q) throw std::invalid_argument("thompson_select: n_T > candidates");
  if (n_t == q) {
    std::vector<int> all(q);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  const int dim = static_cast<int>(candidates.front().size());
  Eigen::MatrixXd pts(q, dim);
  for (int i = 0; i < q; ++i) pts.row(i) = candidates[i].transpose();
  const std::vector<int> tasks(q, models.online_task);

  const int n_models = 1 + static_cast<int>(models.constraints.size());
  std::vector<Eigen::VectorXd> means(n_models);
  std::vector<Eigen::MatrixXd> factors(n_models);
  for (int mi = 0; mi < n_models; ++mi) {
    const FittedModel& model =
        mi == 0 ? models.objective : models.constraints[mi - 1];
    const auto post = model.posterior(pts, tasks);
    means[mi] = post.mean;
    const double floor_value =
        1e-12 * std::max(post.covariance.diagonal().mean(), 1e-300);
    factors[mi] = chol_with_floor(post.covariance, floor_value);
  }

  std::vector<long> wins(q, 0);
  auto eng = make_engine(seed, 0x74686f6dULL);
  Eigen::VectorXd z(q);
  std::vector<Eigen::VectorXd> sample(n_models);
  for (int d = 0; d < draws; ++d) {
    for (int mi = 0; mi < n_models; ++mi) {
      for (int i = 0; i < q; ++i) z[i] = normal_draw(eng);
      sample[mi] = means[mi] + factors[mi] * z;
    }
    int best = -1;
    for (int i = 0; i < q; ++i) {
      bool feasible = true;
      for (int mi = 1; mi < n_models; ++mi) {
        if (sample[mi][i] < 0.0) {
          feasible = false;
          break;
        }
      }
      if (!feasible) continue;
      if (best < 0 || sample[0][i] > sample[0][best]) best = i;
    }
    if (best >= 0) ++wins[best];
  }

  std::vector<int> order(q);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (wins[a] != wins[b]) return wins[a] > wins[b];
    if (means[0][a] != means[0][b]) return means[0][a] > means[0][b];
    return a < b;
  });
  order.resize(n_t);
  return order;
}

BestFeasible best_feasible(const ModelSet& models,
                           const std::vector<Eigen::VectorXd>& online_points) {
  BestFeasible out;
  if (online_points.empty()) return out;
  const int q = static_cast<int>(online_points.size());
  const int dim = static_cast<int>(online_points.front().size());
  Eigen::MatrixXd pts(q, dim);
  for (int i = 0; i < q; ++i) pts.row(i) = online_points[i].transpose();
  const std::vector<int> tasks(q, models.online_task);

  const Eigen::VectorXd obj_mean = models.objective.posterior(pts, tasks).mean;
  std::vector<Eigen::VectorXd> con_means;
  con_means.reserve(models.constraints.size());
  for (const auto& c : models.constraints) {
    con_means.push_back(c.posterior(pts, tasks).mean);
  }

  for (int i = 0; i < q; ++i) {
    bool feasible = true;
    for (const auto& cm : con_means) {
      if (cm[i] < 0.0) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;
    if (!out.found || obj_mean[i] > out.expected_objective) {
      out.found = true;
      out.index = i;
      out.point = online_points[i];
      out.expected_objective = obj_mean[i];
    }
  }
  return out;
}

}  // namespace mtbo
