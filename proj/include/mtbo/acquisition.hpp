#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "mtbo/lbfgsb.hpp"
#include "mtbo/mtgp.hpp"

namespace mtbo {

// Objective plus constraints; every model shares the design space and task
// set. Constraint outcomes are affinely rewritten so that value >= 0 is
// feasible; the objective is maximized.
struct ModelSet {
  FittedModel objective;
  std::vector<FittedModel> constraints;
  int online_task = 0;
};

struct QMCConfig {
  int sample_count = 64;  // >= 8
  std::uint64_t sequence_seed = 0;
};

struct AcquisitionValue {
  double value = 0.0;
  std::vector<double> per_sample;  // inner constrained-EI values
};

// Noisy constrained EI with fixed qMC base samples (common random numbers).
//
// Construction draws sample_count joint samples of (objective, constraints)
// at the online points from the multi-task posteriors, conditions every model
// on its sampled values as noiseless observations (one bordered Cholesky per
// model; only the conditioned means vary per sample), and records each
// sample's best feasible online value. evaluate() is then a pure, smooth,
// deterministic function suitable for gradient ascent.
class NoisyEiContext {
 public:
  NoisyEiContext(const ModelSet& models, const Eigen::MatrixXd& online_points,
                 const QMCConfig& qmc);
  ~NoisyEiContext();
  NoisyEiContext(NoisyEiContext&&) noexcept;
  NoisyEiContext& operator=(NoisyEiContext&&) noexcept;

  AcquisitionValue evaluate(const Eigen::VectorXd& x) const;

  // Sequential-greedy batch support: condition every model at x on its
  // per-sample posterior draw there, and let the draws compete as incumbents.
  void append_fantasy(const Eigen::VectorXd& x, std::uint64_t seed);

  int sample_count() const;

  // Diagnostics: per-sample joint draws at the online points (raw scale,
  // model 0 = objective) and the per-sample best feasible values.
  Eigen::MatrixXd sampled_values(int model_index) const;
  // (incumbent value, valid) per sample.
  std::pair<Eigen::VectorXd, std::vector<char>> incumbents() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// alpha_NEI(x | X_T, data): qMC noisy constrained EI against the best feasible
// online observation. Nonnegative; zero at a noiselessly known incumbent.
AcquisitionValue noisy_ei(const Eigen::VectorXd& x, const ModelSet& models,
                          const Eigen::MatrixXd& online_points,
                          const QMCConfig& qmc);

// Sequential-greedy batch of n_o distinct points maximizing noisy EI, via
// multi-start bound-constrained ascent over fixed base samples.
std::vector<Eigen::VectorXd> generate_candidates(
    const ModelSet& models, const Eigen::MatrixXd& online_points,
    const BoxBounds& bounds, int n_o, const QMCConfig& qmc,
    std::uint64_t seed);

// Thompson sampling: joint posterior draws over the candidates; per draw the
// best feasible candidate wins; the n_T highest win counts are returned
// (ties: higher posterior mean objective, then lower index).
std::vector<int> thompson_select(const ModelSet& models,
                                 const std::vector<Eigen::VectorXd>& candidates,
                                 int n_t, int draws, std::uint64_t seed);

struct BestFeasible {
  bool found = false;
  int index = -1;
  Eigen::VectorXd point;
  double expected_objective = 0.0;
};

// Among the given online-observed points, the one with the highest posterior
// mean objective whose posterior mean constraints are all feasible.
BestFeasible best_feasible(const ModelSet& models,
                           const std::vector<Eigen::VectorXd>& online_points);

}  // namespace mtbo
