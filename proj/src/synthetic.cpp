#include "mtbo/synthetic.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mtbo/parallel.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {

using nlohmann::json;

double hartmann6(const Eigen::VectorXd& x) {
  if (x.size() != 6) throw std::invalid_argument("hartmann6: need 6 dims");
  for (int j = 0; j < 6; ++j) {
    if (!(x[j] >= 0.0 && x[j] <= 1.0)) {
      throw std::invalid_argument("hartmann6: x outside [0,1]^6");
    }
  }
  static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  static const double a[4][6] = {
      {10.0, 3.0, 17.0, 3.5, 1.7, 8.0},
      {0.05, 10.0, 17.0, 0.1, 8.0, 14.0},
      {3.0, 3.5, 1.7, 10.0, 17.0, 8.0},
      {17.0, 8.0, 0.05, 10.0, 0.1, 14.0},
  };
  static const double p[4][6] = {
      {0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
      {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
      {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
      {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381},
  };
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double d = x[j] - p[i][j];
      inner += a[i][j] * d * d;
    }
    sum += alpha[i] * std::exp(-inner);
  }
  return -sum;
}

double offline_transform(double v, const BiasTransform& t) {
  const double slope = v <= t.hinge ? t.slope_below : t.slope_above;
  return slope * (v - t.hinge) + t.hinge;
}

ProblemSpec hartmann6_problem() {
  ProblemSpec spec;
  spec.dimension = 6;
  spec.minimize = true;
  spec.noise_sd = 0.1;
  spec.objective = [](const Eigen::VectorXd& x) { return hartmann6(x); };
  spec.objective_bias = BiasTransform{0.75, 0.4, 0.8};
  ConstraintSpec g;
  g.fn = [](const Eigen::VectorXd& x) { return x.norm(); };
  g.upper_bound = 1.25;
  g.offline_bias = BiasTransform{1.25, 0.8, 4.0};
  spec.constraints.push_back(std::move(g));
  return spec;
}

ChannelResult evaluate_raw(const ProblemSpec& spec, const Eigen::VectorXd& x,
                           bool offline, std::mt19937_64& rng) {
  const int outcomes = 1 + static_cast<int>(spec.constraints.size());
  ChannelResult r;
  r.values.resize(outcomes);
  r.noise_vars =
      Eigen::VectorXd::Constant(outcomes, spec.noise_sd * spec.noise_sd);
  double v = spec.objective(x);
  if (offline) v = offline_transform(v, spec.objective_bias);
  r.values[0] = v + spec.noise_sd * normal_draw(rng);
  for (std::size_t j = 0; j < spec.constraints.size(); ++j) {
    double g = spec.constraints[j].fn(x);
    if (offline) g = offline_transform(g, spec.constraints[j].offline_bias);
    r.values[1 + j] = g + spec.noise_sd * normal_draw(rng);
  }
  return r;
}

ChannelResult SyntheticProblem::evaluate(const Eigen::VectorXd& x, bool offline,
                                         std::mt19937_64& rng) const {
  ChannelResult r = evaluate_raw(spec_, x, offline, rng);
  if (spec_.minimize) r.values[0] = -r.values[0];
  for (std::size_t j = 0; j < spec_.constraints.size(); ++j) {
    r.values[1 + j] = spec_.constraints[j].upper_bound - r.values[1 + j];
  }
  return r;
}

bool SyntheticProblem::truly_feasible(const Eigen::VectorXd& x) const {
  for (const auto& c : spec_.constraints) {
    if (c.fn(x) > c.upper_bound) return false;
  }
  return true;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kSingleTask:
      return "single_task";
    case Method::kMtgpInitOnly:
      return "mtgp_init_only";
    case Method::kMtgpFull:
      return "mtgp_full";
  }
  return "unknown";
}

namespace {

LoopConfig method_config(const LoopConfig& base, Method m) {
  LoopConfig cfg = base;
  switch (m) {
    case Method::kSingleTask:
      cfg.use_offline_init = false;
      cfg.interleave = false;
      break;
    case Method::kMtgpInitOnly:
      cfg.use_offline_init = true;
      cfg.interleave = false;
      break;
    case Method::kMtgpFull:
      cfg.use_offline_init = true;
      cfg.interleave = true;
      break;
  }
  return cfg;
}

// Cumulative best truly-feasible true objective after each online
// observation; 0.0 stands in until a feasible point has been tested (the
// objective is strictly negative on the cube).
Eigen::VectorXd score_trace(const SyntheticProblem& problem,
                            const OptimizationTrace& trace, int total_online) {
  Eigen::VectorXd curve =
      Eigen::VectorXd::Constant(total_online, std::numeric_limits<double>::quiet_NaN());
  double best = 0.0;
  bool any = false;
  int idx = 0;
  for (const auto& batch : trace.batches) {
    if (batch.kind != "online") continue;
    for (int i = 0; i < batch.policies.rows() && idx < total_online; ++i) {
      const Eigen::VectorXd x = batch.policies.row(i).transpose();
      const double f = problem.true_objective(x);
      if (problem.truly_feasible(x) && (!any || f < best)) {
        any = true;
        best = f;
      }
      curve[idx++] = any ? best : 0.0;
    }
  }
  return curve;
}

}  // namespace

ComparisonResult run_comparison(const ProblemSpec& spec,
                                const ComparisonConfig& config) {
  if (config.replicates < 1) {
    throw std::invalid_argument("run_comparison: replicates >= 1");
  }
  const SyntheticProblem problem(spec);
  const int total_online =
      config.loop.online_batch_size * (1 + config.loop.iterations);

  ComparisonResult result;
  result.replicates = config.replicates;
  const int n_methods = static_cast<int>(config.methods.size());
  for (Method m : config.methods) {
    MethodCurve c;
    c.method = m;
    c.per_replicate = Eigen::MatrixXd::Constant(
        config.replicates, total_online,
        std::numeric_limits<double>::quiet_NaN());
    result.curves.push_back(std::move(c));
  }

  std::vector<char> failed(
      static_cast<std::size_t>(n_methods) * config.replicates, 0);
  parallel_for_index(
      static_cast<std::size_t>(n_methods) * config.replicates,
      [&](std::size_t slot) {
        const int mi = static_cast<int>(slot) / config.replicates;
        const int rep = static_cast<int>(slot) % config.replicates;
        LoopConfig cfg = method_config(config.loop, config.methods[mi]);
        cfg.seed = derive_seed(config.base_seed, 1000 + rep);
        cfg.seed_online_design = derive_seed(config.base_seed, 2000 + rep);
        cfg.seed_offline_design = derive_seed(config.base_seed, 3000 + rep);
        const OptimizationTrace trace = run_loop(problem, cfg);
        if (trace.aborted) {
          failed[slot] = 1;
          return;
        }
        result.curves[mi].per_replicate.row(rep) =
            score_trace(problem, trace, total_online).transpose();
      },
      config.parallel);

  for (char f : failed) result.failures += f;
  if (result.failures * 10 >= n_methods * config.replicates) {
    throw std::runtime_error("run_comparison: too many replicate failures");
  }

  for (auto& curve : result.curves) {
    curve.mean.resize(total_online);
    curve.two_se.resize(total_online);
    for (int t = 0; t < total_online; ++t) {
      double sum = 0.0;
      int count = 0;
      for (int r = 0; r < config.replicates; ++r) {
        const double v = curve.per_replicate(r, t);
        if (std::isfinite(v)) {
          sum += v;
          ++count;
        }
      }
      const double mean = count > 0 ? sum / count : 0.0;
      double sq = 0.0;
      for (int r = 0; r < config.replicates; ++r) {
        const double v = curve.per_replicate(r, t);
        if (std::isfinite(v)) sq += (v - mean) * (v - mean);
      }
      curve.mean[t] = mean;
      curve.two_se[t] =
          count > 1 ? 2.0 * std::sqrt(sq / (count - 1) / count) : 0.0;
    }
  }
  return result;
}

std::string ComparisonResult::csv() const {
  std::ostringstream out;
  out << "method,replicate,iteration,best_feasible\n";
  for (const auto& curve : curves) {
    for (int r = 0; r < curve.per_replicate.rows(); ++r) {
      for (int t = 0; t < curve.per_replicate.cols(); ++t) {
        const double v = curve.per_replicate(r, t);
        out << method_name(curve.method) << "," << r << "," << t << ",";
        if (std::isfinite(v)) out << v;
        out << "\n";
      }
    }
  }
  return out.str();
}

std::string ComparisonResult::summary_json() const {
  json j;
  j["failures"] = failures;
  j["replicates"] = replicates;
  for (const auto& curve : curves) {
    json c;
    c["mean"] = std::vector<double>(curve.mean.data(),
                                    curve.mean.data() + curve.mean.size());
    c["two_se"] = std::vector<double>(
        curve.two_se.data(), curve.two_se.data() + curve.two_se.size());
    c["final_mean"] = curve.mean[curve.mean.size() - 1];
    c["final_two_se"] = curve.two_se[curve.two_se.size() - 1];
    j["methods"][method_name(curve.method)] = std::move(c);
  }
  return j.dump(2);
}

}  // namespace mtbo
