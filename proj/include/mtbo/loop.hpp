#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mtbo/acquisition.hpp"
#include "mtbo/dataset.hpp"
#include "mtbo/mtgp.hpp"

namespace mtbo {

// One point evaluated on one channel; values are (objective, constraints...)
// with the objective oriented for maximization and constraints rewritten so
// value >= 0 is feasible.
struct ChannelResult {
  Eigen::VectorXd values;
  Eigen::VectorXd noise_vars;
};

// Evaluation interface the loop drives. Task 0 is the online channel;
// offline evaluations are cheap and biased.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual int dimension() const = 0;
  virtual int num_constraints() const = 0;
  virtual ChannelResult evaluate(const Eigen::VectorXd& x, bool offline,
                                 std::mt19937_64& rng) const = 0;
};

struct LoopConfig {
  int online_batch_size = 5;        // n_T
  int sim_init_batch_size = 20;     // n_S
  int optimization_batch_size = 20; // n_o >= n_T
  int iterations = 3;               // K
  int anchor_count = 5;             // initial policies repeated per sim batch
  int rank_batch = 1;               // ICM rank for batch-adjustment tasks
  int fit_restarts = 10;
  int thompson_draws = 1000;
  QMCConfig qmc;
  std::uint64_t seed_online_design = 1;
  std::uint64_t seed_offline_design = 2;
  std::uint64_t seed = 0;  // fits, acquisition, observation noise streams

  bool use_offline_init = true;  // false: single-task variant
  bool interleave = true;        // false: skip the offline pre-test (lines 6-7)

  // Diagnostics/testing hook: pin hyperparameters instead of ML fitting.
  // The 2xP factor's second row is reused for every simulator batch task.
  struct FixedModel {
    SpatialHyperparams spatial;
    Eigen::MatrixXd factor;
  };
  std::optional<FixedModel> fixed_model;

  void validate() const;
};

// One evaluated batch (initialization or iteration, one channel).
struct BatchRecord {
  int iteration = 0;  // 0 = initialization
  std::string kind;   // "online" | "offline"
  int task_id = 0;    // dataset task id (0 online, 1+b for sim batch b)
  Eigen::MatrixXd policies;              // rows
  std::vector<Eigen::MatrixXd> observed; // per outcome: columns (value, noise_var)
  // After online batches: best observed-feasible objective so far, and the
  // model-expected best feasible (posterior means).
  double incumbent_observed = std::numeric_limits<double>::quiet_NaN();
  bool incumbent_found = false;
  double incumbent_expected = std::numeric_limits<double>::quiet_NaN();
  bool incumbent_expected_found = false;
  std::vector<double> rho_per_outcome;  // fitted online/offline correlation
};

struct OptimizationTrace {
  int dimension = 0;
  int num_outcomes = 0;
  std::vector<BatchRecord> batches;
  bool aborted = false;
  std::string abort_reason;

  bool final_found = false;
  Eigen::VectorXd final_policy;
  double final_expected_objective = std::numeric_limits<double>::quiet_NaN();

  std::string to_jsonl() const;  // one JSON record per batch
  // (iteration, best_feasible) pairs over online batches.
  std::string incumbent_csv() const;
};

// Two disjoint space-filling designs in [0,1]^dim from independently
// scrambled Sobol sequences.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sobol_initialization(
    int dim, int n_online, int n_offline, std::uint64_t seed_online,
    std::uint64_t seed_offline);

// History bookkeeping shared by the loop and its tests.
struct EvaluationRecord {
  Eigen::VectorXd point;
  bool offline = false;
  int batch = 0;  // online batch index or simulator batch index
  Eigen::VectorXd values;
  Eigen::VectorXd noise_vars;
};

// Task 0 = online; simulator batch b becomes task 1 + b. One dataset per
// outcome index.
Dataset assemble_tasks(const std::vector<EvaluationRecord>& history,
                       int outcome, int dim, const std::string& outcome_name);

// The interleaved online-offline Bayesian optimization loop. Deterministic
// given the config seeds. Model-fit or acquisition failures abort the run and
// return the partial trace with `aborted` set.
OptimizationTrace run_loop(const Problem& problem, const LoopConfig& config);

}  // namespace mtbo
