#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtbo/loop.hpp"

namespace mtbo {

// Standard Hartmann 6 test function on [0,1]^6 (global minimum ~ -3.32237).
double hartmann6(const Eigen::VectorXd& x);

// Piecewise-linear bias applied to offline observations; continuous at the
// hinge, exactly linear on each side.
struct BiasTransform {
  double hinge = 0.0;        // m
  double slope_below = 1.0;  // alpha_1 (v <= m)
  double slope_above = 1.0;  // alpha_2
};

double offline_transform(double v, const BiasTransform& t);

struct ConstraintSpec {
  std::function<double(const Eigen::VectorXd&)> fn;  // raw value g(x)
  double upper_bound = 0.0;  // feasible iff g(x) <= upper_bound
  BiasTransform offline_bias;
};

struct ProblemSpec {
  int dimension = 0;
  bool minimize = true;
  double noise_sd = 0.1;  // observation noise, both channels
  std::function<double(const Eigen::VectorXd&)> objective;
  BiasTransform objective_bias;
  std::vector<ConstraintSpec> constraints;
};

// The synthetic online-offline problem: minimize hartmann6 subject to
// ||x||_2 <= 5/4, noise sd 0.1, offline channel biased by hinge transforms
// (objective: m=0.75, a1=0.4, a2=0.8; constraint: m=1.25, a1=0.8, a2=4).
ProblemSpec hartmann6_problem();

// One noisy observation of every outcome on one channel, raw scale.
// Offline evaluations apply the bias transform before adding noise.
ChannelResult evaluate_raw(const ProblemSpec& spec, const Eigen::VectorXd& x,
                           bool offline, std::mt19937_64& rng);

// Adapter for the optimization loop: negates a minimized objective and
// rewrites constraints as (upper_bound - g) >= 0.
class SyntheticProblem final : public Problem {
 public:
  explicit SyntheticProblem(ProblemSpec spec) : spec_(std::move(spec)) {}

  int dimension() const override { return spec_.dimension; }
  int num_constraints() const override {
    return static_cast<int>(spec_.constraints.size());
  }
  ChannelResult evaluate(const Eigen::VectorXd& x, bool offline,
                         std::mt19937_64& rng) const override;

  const ProblemSpec& spec() const { return spec_; }
  // Noiseless scoring helpers.
  double true_objective(const Eigen::VectorXd& x) const {
    return spec_.objective(x);
  }
  bool truly_feasible(const Eigen::VectorXd& x) const;

 private:
  ProblemSpec spec_;
};

enum class Method { kSingleTask, kMtgpInitOnly, kMtgpFull };

std::string method_name(Method m);

struct ComparisonConfig {
  std::vector<Method> methods{Method::kSingleTask, Method::kMtgpInitOnly,
                              Method::kMtgpFull};
  int replicates = 30;
  LoopConfig loop;  // defaults match the synthetic benchmark
  std::uint64_t base_seed = 0;
  bool parallel = true;
};

struct MethodCurve {
  Method method;
  // replicates x total online observations; cumulative best truly-feasible
  // true objective after each online observation (0.0 until one exists).
  // Failed replicates are all-NaN rows.
  Eigen::MatrixXd per_replicate;
  Eigen::VectorXd mean;
  Eigen::VectorXd two_se;
};

struct ComparisonResult {
  std::vector<MethodCurve> curves;
  int failures = 0;
  int replicates = 0;

  std::string csv() const;  // method,replicate,iteration,best_feasible
  std::string summary_json() const;
};

// The three-method comparison on the synthetic problem: matched
// initializations within a replicate, methods differing only in offline use.
// Aborts (throws) when >= 10% of runs fail.
ComparisonResult run_comparison(const ProblemSpec& spec,
                                const ComparisonConfig& config);

}  // namespace mtbo
