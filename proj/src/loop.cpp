#include "mtbo/loop.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mtbo/rng.hpp"
#include "mtbo/sobol.hpp"

namespace mtbo {

using nlohmann::json;

void LoopConfig::validate() const {
  if (online_batch_size < 1) throw std::invalid_argument("loop: n_T >= 1");
  if (optimization_batch_size < online_batch_size) {
    throw std::invalid_argument("loop: n_o >= n_T required");
  }
  if (sim_init_batch_size < 1) throw std::invalid_argument("loop: n_S >= 1");
  if (iterations < 0) throw std::invalid_argument("loop: K >= 0");
  if (anchor_count > sim_init_batch_size) {
    throw std::invalid_argument("loop: anchor_count <= n_S");
  }
  if (rank_batch < 1) throw std::invalid_argument("loop: rank_batch >= 1");
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sobol_initialization(
    int dim, int n_online, int n_offline, std::uint64_t seed_online,
    std::uint64_t seed_offline) {
  auto draw = [dim](SobolSequence& seq, int count,
                    const std::vector<Eigen::VectorXd>& avoid) {
    Eigen::MatrixXd out(count, dim);
    int got = 0;
    while (got < count) {
      const auto& p = seq.next();
      Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(p.data(), dim);
      bool clash = false;
      for (const auto& a : avoid) {
        if ((x - a).norm() == 0.0) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      out.row(got++) = x.transpose();
    }
    return out;
  };

  SobolSequence seq_online(dim, seed_online);
  const Eigen::MatrixXd online = draw(seq_online, n_online, {});
  std::vector<Eigen::VectorXd> avoid;
  avoid.reserve(n_online);
  for (int i = 0; i < n_online; ++i) avoid.push_back(online.row(i).transpose());
  SobolSequence seq_offline(dim, seed_offline);
  const Eigen::MatrixXd offline = draw(seq_offline, n_offline, avoid);
  return {online, offline};
}

Dataset assemble_tasks(const std::vector<EvaluationRecord>& history,
                       int outcome, int dim, const std::string& outcome_name) {
  Dataset data;
  data.outcome_name = outcome_name;
  data.dim = dim;
  for (const auto& rec : history) {
    Observation obs;
    obs.point = rec.point;
    obs.task = rec.offline ? 1 + rec.batch : 0;
    obs.batch = rec.batch;
    obs.mean = rec.values[outcome];
    obs.noise_variance = rec.noise_vars[outcome];
    data.observations.push_back(std::move(obs));
  }
  return data;
}

namespace {

struct LoopState {
  std::vector<EvaluationRecord> history;
  int sim_batches = 0;
  int online_batches = 0;
  double best_observed = std::numeric_limits<double>::quiet_NaN();
  bool best_observed_found = false;
};

// Best objective among online observations whose observed constraint values
// are all feasible; monotone over online batches by construction.
void update_observed_incumbent(LoopState* state) {
  for (const auto& rec : state->history) {
    if (rec.offline) continue;
    bool feasible = true;
    for (int j = 1; j < rec.values.size(); ++j) {
      if (rec.values[j] < 0.0) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;
    if (!state->best_observed_found || rec.values[0] > state->best_observed) {
      state->best_observed_found = true;
      state->best_observed = rec.values[0];
    }
  }
}

std::vector<Eigen::VectorXd> online_points_of(const LoopState& state) {
  std::vector<Eigen::VectorXd> pts;
  for (const auto& rec : state.history) {
    if (!rec.offline) pts.push_back(rec.point);
  }
  return pts;
}

}  // namespace

std::string OptimizationTrace::to_jsonl() const {
  std::ostringstream out;
  for (const auto& b : batches) {
    json rec;
    rec["iteration"] = b.iteration;
    rec["kind"] = b.kind;
    rec["task_id"] = b.task_id;
    json pols = json::array();
    for (int i = 0; i < b.policies.rows(); ++i) {
      pols.push_back(std::vector<double>(
          b.policies.row(i).data(), b.policies.row(i).data() + b.policies.cols()));
    }
    rec["policies"] = std::move(pols);
    json outcomes = json::array();
    for (const auto& obs : b.observed) {
      json per_outcome = json::array();
      for (int i = 0; i < obs.rows(); ++i) {
        per_outcome.push_back({{"y", obs(i, 0)}, {"noise_var", obs(i, 1)}});
      }
      outcomes.push_back(std::move(per_outcome));
    }
    rec["observations"] = std::move(outcomes);
    if (b.kind == "online") {
      rec["incumbent_found"] = b.incumbent_found;
      if (b.incumbent_found) rec["incumbent_observed"] = b.incumbent_observed;
      rec["incumbent_expected_found"] = b.incumbent_expected_found;
      if (b.incumbent_expected_found) {
        rec["incumbent_expected"] = b.incumbent_expected;
      }
    }
    if (!b.rho_per_outcome.empty()) rec["rho"] = b.rho_per_outcome;
    out << rec.dump() << "\n";
  }
  json final_rec;
  final_rec["final"] = true;
  final_rec["found"] = final_found;
  if (final_found) {
    final_rec["policy"] = std::vector<double>(
        final_policy.data(), final_policy.data() + final_policy.size());
    final_rec["expected_objective"] = final_expected_objective;
  }
  final_rec["aborted"] = aborted;
  if (aborted) final_rec["abort_reason"] = abort_reason;
  out << final_rec.dump() << "\n";
  return out.str();
}

std::string OptimizationTrace::incumbent_csv() const {
  std::ostringstream out;
  out << "iteration,best_feasible\n";
  int online_idx = 0;
  for (const auto& b : batches) {
    if (b.kind != "online") continue;
    out << online_idx++ << ",";
    if (b.incumbent_found) {
      out << b.incumbent_observed;
    }
    out << "\n";
  }
  return out.str();
}

namespace {

std::vector<FittedModel> fit_outcome_models(const LoopState& state,
                                            const LoopConfig& config,
                                            const Problem& problem,
                                            std::uint64_t stage_tag,
                                            std::vector<double>* rho_out) {
  const int outcomes = 1 + problem.num_constraints();
  std::vector<FittedModel> models;
  models.reserve(outcomes);
  const int num_tasks = 1 + state.sim_batches;
  if (rho_out) rho_out->assign(outcomes, std::numeric_limits<double>::quiet_NaN());

  for (int o = 0; o < outcomes; ++o) {
    Dataset data =
        assemble_tasks(state.history, o, problem.dimension(),
                       o == 0 ? "objective" : "constraint_" + std::to_string(o));
    if (config.fixed_model) {
      // Reuse the offline factor row for every simulator batch task.
      const Eigen::MatrixXd& f2 = config.fixed_model->factor;
      Eigen::MatrixXd factor;
      if (num_tasks == 1) {
        factor = Eigen::MatrixXd::Constant(1, 1, f2.row(0).norm());
      } else {
        factor.resize(num_tasks, f2.cols());
        factor.row(0) = f2.row(0);
        for (int t = 1; t < num_tasks; ++t) {
          factor.row(t) = f2.row(std::min<int>(1, f2.rows() - 1));
        }
      }
      models.push_back(FittedModel::with_hyperparameters(
          data, config.fixed_model->spatial, build_task_covariance(factor)));
    } else {
      FitOptions opts;
      opts.restarts = config.fit_restarts;
      opts.seed = derive_seed(config.seed, stage_tag * 64 + o);
      if (num_tasks >= 3) {
        opts.structure =
            TaskStructure::batch_composite(num_tasks, config.rank_batch);
      } else {
        opts.rank = num_tasks;  // full rank for the online-offline pair
      }
      models.push_back(FittedModel::fit(data, opts));
    }
    if (rho_out && num_tasks >= 2) {
      (*rho_out)[o] = models.back().inter_task_correlation(0, 1);
    }
  }
  return models;
}

ModelSet to_model_set(std::vector<FittedModel> models) {
  ModelSet set{std::move(models.front()), {}, 0};
  for (std::size_t i = 1; i < models.size(); ++i) {
    set.constraints.push_back(std::move(models[i]));
  }
  return set;
}

void evaluate_batch(const Problem& problem, const Eigen::MatrixXd& points,
                    bool offline, int batch_index, std::uint64_t noise_seed,
                    LoopState* state, BatchRecord* record) {
  auto eng = make_engine(noise_seed, offline ? 0x0ffULL : 0x0aULL);
  const int outcomes = 1 + problem.num_constraints();
  record->policies = points;
  record->observed.assign(outcomes,
                          Eigen::MatrixXd(points.rows(), 2));
  for (int i = 0; i < points.rows(); ++i) {
    const ChannelResult r =
        problem.evaluate(points.row(i).transpose(), offline, eng);
    EvaluationRecord rec;
    rec.point = points.row(i).transpose();
    rec.offline = offline;
    rec.batch = batch_index;
    rec.values = r.values;
    rec.noise_vars = r.noise_vars;
    for (int o = 0; o < outcomes; ++o) {
      record->observed[o](i, 0) = r.values[o];
      record->observed[o](i, 1) = r.noise_vars[o];
    }
    state->history.push_back(std::move(rec));
  }
}

Eigen::MatrixXd stack_points(const std::vector<Eigen::VectorXd>& pts) {
  Eigen::MatrixXd out(pts.size(), pts.empty() ? 0 : pts.front().size());
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(i) = pts[i].transpose();
  return out;
}

}  // namespace

OptimizationTrace run_loop(const Problem& problem, const LoopConfig& config) {
  config.validate();
  const int dim = problem.dimension();

  OptimizationTrace trace;
  trace.dimension = dim;
  trace.num_outcomes = 1 + problem.num_constraints();

  LoopState state;
  Eigen::MatrixXd anchors;

  try {
    // Line 1-2: quasi-random initialization, evaluated on both channels.
    const auto [online_init, offline_init] = sobol_initialization(
        dim, config.online_batch_size, config.sim_init_batch_size,
        config.seed_online_design, config.seed_offline_design);

    if (config.use_offline_init) {
      BatchRecord rec;
      rec.iteration = 0;
      rec.kind = "offline";
      rec.task_id = 1;
      evaluate_batch(problem, offline_init, true, state.sim_batches,
                     derive_seed(config.seed, 0x100), &state, &rec);
      ++state.sim_batches;
      anchors = offline_init.topRows(
          std::min<int>(config.anchor_count, offline_init.rows()));
      trace.batches.push_back(std::move(rec));
    }

    {
      BatchRecord rec;
      rec.iteration = 0;
      rec.kind = "online";
      rec.task_id = 0;
      evaluate_batch(problem, online_init, false, state.online_batches,
                     derive_seed(config.seed, 0x200), &state, &rec);
      ++state.online_batches;
      update_observed_incumbent(&state);
      rec.incumbent_found = state.best_observed_found;
      rec.incumbent_observed = state.best_observed;
      auto models = to_model_set(
          fit_outcome_models(state, config, problem, 0x1000, &rec.rho_per_outcome));
      const BestFeasible bf = best_feasible(models, online_points_of(state));
      rec.incumbent_expected_found = bf.found;
      rec.incumbent_expected = bf.expected_objective;
      trace.batches.push_back(std::move(rec));
    }

    for (int k = 1; k <= config.iterations; ++k) {
      // Line 4: fit an MTGP per outcome to all observations.
      std::vector<double> rho;
      ModelSet models = to_model_set(
          fit_outcome_models(state, config, problem, 0x2000 + k, &rho));

      // Line 5: optimize the acquisition into a batch of candidates.
      const int n_cand = config.interleave ? config.optimization_batch_size
                                           : config.online_batch_size;
      const Eigen::MatrixXd x_online = stack_points(online_points_of(state));
      const auto candidates = generate_candidates(
          models, x_online, BoxBounds{Eigen::VectorXd::Zero(dim),
                                      Eigen::VectorXd::Ones(dim)},
          n_cand, config.qmc, derive_seed(config.seed, 0x3000 + k));

      std::vector<int> selected;
      if (config.interleave) {
        // Line 6: pre-test candidates (plus anchors) on the simulator.
        Eigen::MatrixXd sim_points(candidates.size() + anchors.rows(), dim);
        sim_points.topRows(candidates.size()) = stack_points(candidates);
        if (anchors.rows() > 0) sim_points.bottomRows(anchors.rows()) = anchors;
        BatchRecord rec;
        rec.iteration = k;
        rec.kind = "offline";
        rec.task_id = 1 + state.sim_batches;
        rec.rho_per_outcome = rho;
        evaluate_batch(problem, sim_points, true, state.sim_batches,
                       derive_seed(config.seed, 0x4000 + k), &state, &rec);
        ++state.sim_batches;
        trace.batches.push_back(std::move(rec));

        // Line 7: refit with the new simulator observations.
        models = to_model_set(
            fit_outcome_models(state, config, problem, 0x5000 + k, &rho));

        // Line 8: Thompson-select the online subset.
        selected = thompson_select(models, candidates, config.online_batch_size,
                                   config.thompson_draws,
                                   derive_seed(config.seed, 0x6000 + k));
      } else {
        selected.resize(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          selected[i] = static_cast<int>(i);
        }
      }

      Eigen::MatrixXd online_points(selected.size(), dim);
      for (std::size_t i = 0; i < selected.size(); ++i) {
        online_points.row(i) = candidates[selected[i]].transpose();
      }
      BatchRecord rec;
      rec.iteration = k;
      rec.kind = "online";
      rec.task_id = 0;
      rec.rho_per_outcome = rho;
      evaluate_batch(problem, online_points, false, state.online_batches,
                     derive_seed(config.seed, 0x7000 + k), &state, &rec);
      ++state.online_batches;
      update_observed_incumbent(&state);
      rec.incumbent_found = state.best_observed_found;
      rec.incumbent_observed = state.best_observed;
      const BestFeasible bf = best_feasible(models, online_points_of(state));
      rec.incumbent_expected_found = bf.found;
      rec.incumbent_expected = bf.expected_objective;
      trace.batches.push_back(std::move(rec));
    }

    // Return the best policy observed online, judged by the final models.
    const auto final_models = to_model_set(
        fit_outcome_models(state, config, problem, 0x8000, nullptr));
    const BestFeasible bf = best_feasible(final_models, online_points_of(state));
    if (bf.found) {
      trace.final_found = true;
      trace.final_policy = bf.point;
      trace.final_expected_objective = bf.expected_objective;
    }
  } catch (const std::exception& e) {
    trace.aborted = true;
    trace.abort_reason = e.what();
  }
  return trace;
}

}  // namespace mtbo
