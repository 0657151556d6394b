#include "mtbo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mtbo {

using nlohmann::json;

int Dataset::num_tasks() const {
  int max_task = -1;
  for (const auto& obs : observations) max_task = std::max(max_task, obs.task);
  return max_task + 1;
}

std::vector<int> Dataset::task_ids() const {
  std::set<int> ids;
  for (const auto& obs : observations) ids.insert(obs.task);
  return {ids.begin(), ids.end()};
}

std::vector<int> Dataset::indices_of_task(int task) const {
  std::vector<int> idx;
  for (int i = 0; i < size(); ++i) {
    if (observations[i].task == task) idx.push_back(i);
  }
  return idx;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.outcome_name = outcome_name;
  out.dim = dim;
  out.observations.reserve(indices.size());
  for (int i : indices) out.observations.push_back(observations.at(i));
  return out;
}

void Dataset::validate() const {
  for (const auto& obs : observations) {
    if (obs.point.size() != dim) {
      throw std::invalid_argument("Dataset: observation dimension mismatch");
    }
    for (int j = 0; j < dim; ++j) {
      if (!(obs.point[j] >= 0.0 && obs.point[j] <= 1.0)) {
        throw std::invalid_argument("Dataset: point outside [0,1]^m");
      }
    }
    if (!(obs.noise_variance >= 0.0)) {
      throw std::invalid_argument("Dataset: negative noise variance");
    }
    if (obs.task < 0) throw std::invalid_argument("Dataset: negative task id");
  }
}

Standardization Standardization::identity(int num_tasks) {
  return {Eigen::VectorXd::Zero(num_tasks), Eigen::VectorXd::Ones(num_tasks)};
}

Standardization Standardization::fit_to(const Dataset& data) {
  const int num_tasks = std::max(data.num_tasks(), 1);
  Standardization s = identity(num_tasks);

  double pooled_mean = 0.0, pooled_sq = 0.0;
  for (const auto& obs : data.observations) pooled_mean += obs.mean;
  pooled_mean /= std::max(data.size(), 1);
  for (const auto& obs : data.observations) {
    pooled_sq += (obs.mean - pooled_mean) * (obs.mean - pooled_mean);
  }
  const double pooled_sd =
      data.size() >= 2 ? std::sqrt(pooled_sq / (data.size() - 1)) : 0.0;
  const double fallback = pooled_sd > 1e-12 ? pooled_sd : 1.0;

  for (int t = 0; t < num_tasks; ++t) {
    const auto idx = data.indices_of_task(t);
    if (idx.empty()) continue;
    double mean = 0.0;
    for (int i : idx) mean += data.observations[i].mean;
    mean /= static_cast<double>(idx.size());
    double sq = 0.0;
    for (int i : idx) {
      const double d = data.observations[i].mean - mean;
      sq += d * d;
    }
    const double sd =
        idx.size() >= 2 ? std::sqrt(sq / (idx.size() - 1)) : 0.0;
    s.shift[t] = mean;
    s.scale[t] = sd > 1e-12 ? sd : fallback;
  }
  return s;
}

Dataset Standardization::apply(const Dataset& data) const {
  Dataset out = data;
  for (auto& obs : out.observations) {
    const double sc = scale[obs.task];
    obs.mean = (obs.mean - shift[obs.task]) / sc;
    obs.noise_variance /= sc * sc;
  }
  return out;
}

std::string dataset_to_json(const Dataset& data) {
  json j;
  j["outcome"] = data.outcome_name;
  j["dim"] = data.dim;
  json obs_list = json::array();
  for (const auto& obs : data.observations) {
    json o;
    o["x"] = std::vector<double>(obs.point.data(),
                                 obs.point.data() + obs.point.size());
    o["task"] = obs.task;
    o["batch"] = obs.batch;
    o["y"] = obs.mean;
    o["noise_var"] = obs.noise_variance;
    obs_list.push_back(std::move(o));
  }
  j["observations"] = std::move(obs_list);
  return j.dump(2);
}

Dataset dataset_from_json(const std::string& text) {
  const json j = json::parse(text);
  Dataset data;
  data.outcome_name = j.at("outcome").get<std::string>();
  data.dim = j.at("dim").get<int>();
  for (const auto& o : j.at("observations")) {
    Observation obs;
    const auto x = o.at("x").get<std::vector<double>>();
    obs.point = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    obs.task = o.at("task").get<int>();
    obs.batch = o.at("batch").get<int>();
    obs.mean = o.at("y").get<double>();
    obs.noise_variance = o.at("noise_var").get<double>();
    data.observations.push_back(std::move(obs));
  }
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << dataset_to_json(data) << "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return dataset_from_json(text);
}

}  // namespace mtbo
