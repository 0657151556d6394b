#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace mtbo {

// One noisy outcome measurement of a design point on a task.
struct Observation {
  Eigen::VectorXd point;  // normalized design space [0,1]^m
  int task = 0;
  int batch = 0;
  double mean = 0.0;            // y_i
  double noise_variance = 0.0;  // eta_i^2 >= 0
};

struct Dataset {
  std::string outcome_name;
  int dim = 0;
  std::vector<Observation> observations;

  int size() const { return static_cast<int>(observations.size()); }
  // 1 + highest task id present (task ids are dense in normal use).
  int num_tasks() const;
  std::vector<int> task_ids() const;
  std::vector<int> indices_of_task(int task) const;
  Dataset subset(const std::vector<int>& indices) const;

  // Throws std::invalid_argument when a point leaves [0,1]^dim, dimensions
  // disagree, or a noise variance is negative.
  void validate() const;
};

// Per-task affine transform: standardized = (y - shift[task]) / scale[task].
// Tasks with fewer than two observations or zero spread fall back to the
// pooled standard deviation (or 1 when everything is constant).
struct Standardization {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  static Standardization fit_to(const Dataset& data);
  static Standardization identity(int num_tasks);

  Dataset apply(const Dataset& data) const;  // scales noise by 1/scale^2
  double to_raw_mean(double std_mean, int task) const {
    return shift[task] + scale[task] * std_mean;
  }
};

std::string dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const std::string& text);
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace mtbo
