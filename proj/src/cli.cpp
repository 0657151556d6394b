#include "mtbo/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mtbo/analysis.hpp"
#include "mtbo/parallel.hpp"
#include "mtbo/rng.hpp"
#include "mtbo/synthetic.hpp"

namespace mtbo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct KeySpec {
  const char* name;
  json default_value;
};

const std::vector<KeySpec>& keys_for(const std::string& sub) {
  static const std::vector<KeySpec> fit_keys = {
      {"input", ""}, {"rank", 0}, {"restarts", 10}, {"seed", 0}};
  static const std::vector<KeySpec> loo_keys = {{"input", ""},
                                                {"target_task", 0},
                                                {"rank", 0},
                                                {"restarts", 10},
                                                {"seed", 0}};
  static const std::vector<KeySpec> optimize_keys = {
      {"method", "mtgp_full"}, {"n_T", 5},           {"n_S", 20},
      {"n_o", 20},             {"iterations", 3},    {"anchor_count", 5},
      {"rank_batch", 1},       {"restarts", 10},     {"qmc_samples", 64},
      {"thompson_draws", 1000}, {"noise_sd", 0.1},   {"seed", 0},
      {"seed_online_design", 1}, {"seed_offline_design", 2}};
  static const std::vector<KeySpec> benchmark_keys = {
      {"methods", json::array({"single_task", "mtgp_init_only", "mtgp_full"})},
      {"replicates", 30},
      {"n_T", 5},
      {"n_S", 20},
      {"n_o", 20},
      {"batches", 4},
      {"anchor_count", 5},
      {"restarts", 10},
      {"qmc_samples", 64},
      {"thompson_draws", 1000},
      {"noise_sd", 0.1},
      {"objective_bias", json::array({0.75, 0.4, 0.8})},
      {"constraint_bias", json::array({1.25, 0.8, 4.0})},
      {"seed", 0}};
  static const std::vector<KeySpec> curve_keys = {
      {"input", ""},
      {"generate", false},
      {"rho2", 0.9},
      {"gen_dim", 10},
      {"gen_n_online", 20},
      {"gen_n_offline", 100},
      {"gen_noise_var", 0.01},
      {"grid", json::array({json::array({2, 90}), json::array({5, 50}),
                            json::array({10, 50})})},
      {"single_n_grid", json::array()},
      {"replicates", 500},
      {"rank", 2},
      {"restarts", 10},
      {"seed", 0}};
  static const std::vector<KeySpec> bound_keys = {{"instances", 500},
                                                  {"seed", 0}};
  static const std::vector<KeySpec> empty;
  if (sub == "fit") return fit_keys;
  if (sub == "loo") return loo_keys;
  if (sub == "optimize") return optimize_keys;
  if (sub == "benchmark") return benchmark_keys;
  if (sub == "learning-curve") return curve_keys;
  if (sub == "bound-check") return bound_keys;
  return empty;
}

json defaults_for(const std::string& sub) {
  json j = json::object();
  for (const auto& k : keys_for(sub)) j[k.name] = k.default_value;
  return j;
}

void merge_strict(json* target, const json& source, const std::string& sub) {
  if (!source.is_object()) {
    throw std::runtime_error("config root must be a JSON object");
  }
  for (auto it = source.begin(); it != source.end(); ++it) {
    if (it.key() == "subcommand" || it.key() == "threads") continue;
    if (!target->contains(it.key())) {
      throw std::runtime_error("unknown config key '" + it.key() +
                               "' for subcommand '" + sub + "'");
    }
    (*target)[it.key()] = it.value();
  }
}

template <typename T>
T get_key(const json& params, const std::string& key) {
  try {
    return params.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::runtime_error("config key '" + key + "': " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// ---- subcommand handlers ----

int run_fit(const RunConfig& cfg) {
  const Dataset data = load_dataset(get_key<std::string>(cfg.params, "input"));
  FitOptions opts;
  opts.rank = get_key<int>(cfg.params, "rank");
  opts.restarts = get_key<int>(cfg.params, "restarts");
  opts.seed = get_key<std::uint64_t>(cfg.params, "seed");
  const FittedModel model = FittedModel::fit(data, opts);

  json out;
  out["outcome"] = data.outcome_name;
  out["observations"] = data.size();
  out["num_tasks"] = model.num_tasks();
  out["log_marginal_likelihood"] = model.log_marginal();
  out["output_variance"] = model.spatial().output_variance;
  out["lengthscales"] = std::vector<double>(
      model.spatial().lengthscales.data(),
      model.spatial().lengthscales.data() + model.spatial().lengthscales.size());
  const Eigen::MatrixXd b = model.tasks().matrix();
  json bm = json::array();
  for (int i = 0; i < b.rows(); ++i) {
    bm.push_back(std::vector<double>(b.row(i).data(), b.row(i).data() + b.cols()));
  }
  out["task_covariance"] = std::move(bm);
  if (model.num_tasks() >= 2) {
    out["rho"] = model.inter_task_correlation(0, 1);
  }
  write_file(fs::path(cfg.out_dir) / "model_summary.json", out.dump(2) + "\n");
  return 0;
}

int run_loo(const RunConfig& cfg) {
  const Dataset data = load_dataset(get_key<std::string>(cfg.params, "input"));
  FitOptions opts;
  opts.rank = get_key<int>(cfg.params, "rank");
  opts.restarts = get_key<int>(cfg.params, "restarts");
  opts.seed = get_key<std::uint64_t>(cfg.params, "seed");
  const int target = get_key<int>(cfg.params, "target_task");
  const LooResult res = loo_cross_validation(data, target, opts);

  std::ostringstream csv;
  csv << "index,predicted_mean,predicted_variance,actual\n";
  for (const auto& p : res.points) {
    csv << p.index << "," << fmt(p.predicted_mean) << ","
        << fmt(p.predicted_variance) << "," << fmt(p.actual) << "\n";
  }
  write_file(fs::path(cfg.out_dir) / "loo.csv", csv.str());
  json summary;
  summary["mse"] = res.mse;
  summary["points"] = res.points.size();
  summary["target_task"] = target;
  write_file(fs::path(cfg.out_dir) / "loo_summary.json", summary.dump(2) + "\n");
  return 0;
}

LoopConfig loop_config_from(const json& p) {
  LoopConfig loop;
  loop.online_batch_size = get_key<int>(p, "n_T");
  loop.sim_init_batch_size = get_key<int>(p, "n_S");
  loop.optimization_batch_size = get_key<int>(p, "n_o");
  loop.anchor_count =
      std::min(get_key<int>(p, "anchor_count"), loop.sim_init_batch_size);
  loop.fit_restarts = get_key<int>(p, "restarts");
  loop.qmc.sample_count = get_key<int>(p, "qmc_samples");
  loop.thompson_draws = get_key<int>(p, "thompson_draws");
  return loop;
}

int run_optimize(const RunConfig& cfg) {
  const auto& p = cfg.params;
  LoopConfig loop = loop_config_from(p);
  loop.iterations = get_key<int>(p, "iterations");
  loop.rank_batch = get_key<int>(p, "rank_batch");
  loop.seed = get_key<std::uint64_t>(p, "seed");
  loop.seed_online_design = get_key<std::uint64_t>(p, "seed_online_design");
  loop.seed_offline_design = get_key<std::uint64_t>(p, "seed_offline_design");
  loop.qmc.sequence_seed = derive_seed(loop.seed, 0x9b1eULL);

  const std::string method = get_key<std::string>(p, "method");
  if (method == "single_task") {
    loop.use_offline_init = false;
    loop.interleave = false;
  } else if (method == "mtgp_init_only") {
    loop.interleave = false;
  } else if (method != "mtgp_full") {
    throw std::runtime_error("config key 'method': unknown method " + method);
  }

  ProblemSpec spec = hartmann6_problem();
  spec.noise_sd = get_key<double>(p, "noise_sd");
  const SyntheticProblem problem(spec);
  const OptimizationTrace trace = run_loop(problem, loop);

  const fs::path out(cfg.out_dir);
  if (trace.aborted) {
    write_file(out / "trace.jsonl.partial", trace.to_jsonl());
    throw std::runtime_error("optimize aborted: " + trace.abort_reason);
  }
  write_file(out / "trace.jsonl", trace.to_jsonl());
  write_file(out / "incumbent.csv", trace.incumbent_csv());
  json result;
  result["found"] = trace.final_found;
  if (trace.final_found) {
    result["policy"] = std::vector<double>(
        trace.final_policy.data(),
        trace.final_policy.data() + trace.final_policy.size());
    result["expected_objective"] = trace.final_expected_objective;
  }
  write_file(out / "result.json", result.dump(2) + "\n");
  return 0;
}

int run_benchmark(const RunConfig& cfg) {
  const auto& p = cfg.params;
  ComparisonConfig comparison;
  comparison.loop = loop_config_from(p);
  comparison.loop.iterations = get_key<int>(p, "batches") - 1;
  if (comparison.loop.iterations < 0) {
    throw std::runtime_error("config key 'batches': must be >= 1");
  }
  comparison.replicates = get_key<int>(p, "replicates");
  comparison.base_seed = get_key<std::uint64_t>(p, "seed");
  comparison.loop.qmc.sequence_seed =
      derive_seed(comparison.base_seed, 0x9b1eULL);

  comparison.methods.clear();
  for (const auto& name : get_key<std::vector<std::string>>(p, "methods")) {
    if (name == "single_task") {
      comparison.methods.push_back(Method::kSingleTask);
    } else if (name == "mtgp_init_only") {
      comparison.methods.push_back(Method::kMtgpInitOnly);
    } else if (name == "mtgp_full") {
      comparison.methods.push_back(Method::kMtgpFull);
    } else {
      throw std::runtime_error("config key 'methods': unknown method " + name);
    }
  }

  ProblemSpec spec = hartmann6_problem();
  spec.noise_sd = get_key<double>(p, "noise_sd");
  const auto ob = get_key<std::vector<double>>(p, "objective_bias");
  const auto cb = get_key<std::vector<double>>(p, "constraint_bias");
  if (ob.size() != 3 || cb.size() != 3) {
    throw std::runtime_error("bias transforms need [m, alpha1, alpha2]");
  }
  spec.objective_bias = BiasTransform{ob[0], ob[1], ob[2]};
  spec.constraints[0].offline_bias = BiasTransform{cb[0], cb[1], cb[2]};

  const ComparisonResult result = run_comparison(spec, comparison);
  const fs::path out(cfg.out_dir);
  write_file(out / "benchmark.csv", result.csv());
  write_file(out / "benchmark_summary.json", result.summary_json() + "\n");
  return 0;
}

int run_learning_curve(const RunConfig& cfg) {
  const auto& p = cfg.params;
  Dataset data;
  if (get_key<bool>(p, "generate")) {
    const double rho2 = get_key<double>(p, "rho2");
    SpatialHyperparams h;
    const int dim = get_key<int>(p, "gen_dim");
    h.output_variance = 1.0;
    h.lengthscales = Eigen::VectorXd::Constant(dim, 0.5);
    data = make_generative_two_task(
        dim, get_key<int>(p, "gen_n_online"), get_key<int>(p, "gen_n_offline"),
        std::sqrt(std::max(0.0, rho2)), h, get_key<double>(p, "gen_noise_var"),
        get_key<std::uint64_t>(p, "seed"));
  } else {
    const std::string input = get_key<std::string>(p, "input");
    if (input.empty()) {
      throw std::runtime_error(
          "learning-curve: provide 'input' or set 'generate'");
    }
    data = load_dataset(input);
  }

  LearningCurveConfig curve_cfg;
  curve_cfg.replicates = get_key<int>(p, "replicates");
  curve_cfg.rank = get_key<int>(p, "rank");
  curve_cfg.fit_restarts = get_key<int>(p, "restarts");
  curve_cfg.seed = get_key<std::uint64_t>(p, "seed");

  std::vector<std::pair<int, int>> grid;
  for (const auto& cell : p.at("grid")) {
    const auto pair = cell.get<std::vector<int>>();
    if (pair.size() != 2) throw std::runtime_error("grid cells are [n_T, n_S]");
    grid.emplace_back(pair[0], pair[1]);
  }
  const auto curve = empirical_learning_curve(data, grid, curve_cfg);

  std::ostringstream csv;
  csv << "n_T,n_S,mean_mse,mse_se,mean_var,var_se\n";
  for (const auto& pt : curve) {
    csv << pt.n_online << "," << pt.n_offline << "," << fmt(pt.mean_mse) << ","
        << fmt(pt.mse_stderr) << "," << fmt(pt.mean_predictive_variance) << ","
        << fmt(pt.variance_stderr) << "\n";
  }
  const fs::path out(cfg.out_dir);
  write_file(out / "learning_curve.csv", csv.str());

  const auto single_grid = get_key<std::vector<int>>(p, "single_n_grid");
  if (!single_grid.empty()) {
    // Single-task curve from the offline observations, then the theoretical
    // bound with rho estimated from a full two-task fit.
    Dataset offline_only = data.subset(data.indices_of_task(1));
    for (auto& obs : offline_only.observations) obs.task = 0;
    const SingleTaskCurve st =
        single_task_learning_curve(offline_only, single_grid, curve_cfg);
    std::ostringstream st_csv;
    st_csv << "n,mean_var,var_se\n";
    for (std::size_t i = 0; i < st.n.size(); ++i) {
      st_csv << st.n[i] << "," << fmt(st.mean_variance[i]) << ","
             << fmt(st.variance_stderr[i]) << "\n";
    }
    write_file(out / "single_task_curve.csv", st_csv.str());

    FitOptions full_opts;
    full_opts.rank = 2;
    full_opts.restarts = curve_cfg.fit_restarts;
    full_opts.seed = derive_seed(curve_cfg.seed, 0xf111ULL);
    const FittedModel full = FittedModel::fit(data, full_opts);
    const double rho = full.inter_task_correlation(0, 1);

    std::ostringstream bound_csv;
    bound_csv << "n_T,n_S,empirical,bound\n";
    for (const auto& pt : curve) {
      double bound = std::numeric_limits<double>::quiet_NaN();
      try {
        bound = chai_bound(st, rho, pt.n_online, pt.n_offline);
      } catch (const std::exception&) {
        // outside the measured curve's support; leave blank
      }
      bound_csv << pt.n_online << "," << pt.n_offline << ","
                << fmt(pt.mean_predictive_variance) << ",";
      if (std::isfinite(bound)) bound_csv << fmt(bound);
      bound_csv << "\n";
    }
    write_file(out / "bound_comparison.csv", bound_csv.str());
  }
  return 0;
}

int run_bound_check(const RunConfig& cfg) {
  const int instances = get_key<int>(cfg.params, "instances");
  const auto battery =
      run_proposition_battery(instances, get_key<std::uint64_t>(cfg.params, "seed"));
  std::ostringstream csv;
  csv << "lhs,rhs,variance_rho1,variance_rho0,holds\n";
  for (const auto& c : battery.checks) {
    csv << fmt(c.lhs) << "," << fmt(c.rhs) << "," << fmt(c.variance_rho1) << ","
        << fmt(c.variance_rho0) << "," << (c.holds ? 1 : 0) << "\n";
  }
  const fs::path out(cfg.out_dir);
  write_file(out / "bound_check.csv", csv.str());
  json summary;
  summary["violations"] = battery.violations;
  summary["total"] = battery.total;
  summary["max_violation"] = battery.max_violation;
  write_file(out / "bound_summary.json", summary.dump(2) + "\n");
  std::cout << "violations: " << battery.violations << " / " << battery.total
            << "\n";
  return battery.violations == 0 ? 0 : 1;
}

}  // namespace

RunConfig parse_config(int argc, const char* const* argv) {
  CLI::App app{"multi-task Bayesian optimization toolkit"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  std::map<std::string, std::string> string_flags;
  std::map<std::string, long long> int_flags;
  std::map<std::string, double> double_flags;

  static const std::vector<std::string> subs = {
      "fit", "loo", "optimize", "benchmark", "learning-curve", "bound-check"};
  for (const auto& name : subs) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--threads", cfg.threads, "worker thread cap");
    for (const auto& key : keys_for(name)) {
      const std::string flag = "--" + std::string(key.name);
      if (key.default_value.is_string()) {
        sub->add_option(flag, string_flags[key.name]);
      } else if (key.default_value.is_number_float()) {
        sub->add_option(flag, double_flags[key.name]);
      } else if (key.default_value.is_number_integer() ||
                 key.default_value.is_number_unsigned() ||
                 key.default_value.is_boolean()) {
        sub->add_option(flag, int_flags[key.name]);
      }
      // array-valued keys are config-file only
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    throw std::runtime_error(std::string("flag parsing: ") + e.what());
  }

  CLI::App* active = app.get_subcommands().front();
  cfg.subcommand = active->get_name();
  cfg.params = defaults_for(cfg.subcommand);

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config " + config_path);
    json file_cfg;
    try {
      file_cfg = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(std::string("config parse error: ") + e.what());
    }
    merge_strict(&cfg.params, file_cfg, cfg.subcommand);
  }

  // Flags override file values.
  for (const auto& key : keys_for(cfg.subcommand)) {
    const std::string flag = "--" + std::string(key.name);
    const auto* opt = active->get_option_no_throw(flag);
    if (opt == nullptr || opt->count() == 0) continue;
    if (key.default_value.is_string()) {
      cfg.params[key.name] = string_flags[key.name];
    } else if (key.default_value.is_number_float()) {
      cfg.params[key.name] = double_flags[key.name];
    } else if (key.default_value.is_boolean()) {
      cfg.params[key.name] = int_flags[key.name] != 0;
    } else {
      cfg.params[key.name] = int_flags[key.name];
    }
  }
  return cfg;
}

int dispatch(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  set_thread_cap(cfg.threads);

  // Effective-config echo: re-running from it reproduces the outputs.
  json echo;
  echo["subcommand"] = cfg.subcommand;
  echo["threads"] = cfg.threads;
  for (auto it = cfg.params.begin(); it != cfg.params.end(); ++it) {
    echo[it.key()] = it.value();
  }
  write_file(fs::path(cfg.out_dir) / "effective_config.json",
             echo.dump(2) + "\n");

  try {
    if (cfg.subcommand == "fit") return run_fit(cfg);
    if (cfg.subcommand == "loo") return run_loo(cfg);
    if (cfg.subcommand == "optimize") return run_optimize(cfg);
    if (cfg.subcommand == "benchmark") return run_benchmark(cfg);
    if (cfg.subcommand == "learning-curve") return run_learning_curve(cfg);
    if (cfg.subcommand == "bound-check") return run_bound_check(cfg);
    throw std::runtime_error("unknown subcommand " + cfg.subcommand);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    err["subcommand"] = cfg.subcommand;
    write_file(fs::path(cfg.out_dir) / "error.json", err.dump(2) + "\n");
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(int argc, const char* const* argv) {
  try {
    return dispatch(parse_config(argc, argv));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mtbo
