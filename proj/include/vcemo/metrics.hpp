#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace vcemo {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct MetricsReport {
  Eigen::MatrixXi confusion;  // rows true, columns predicted
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double weighted_accuracy = 0.0;
  double unweighted_accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(confusion.rows()); }
  long total() const { return confusion.sum(); }

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// F1 = 2 p r / (p + r), 0 when p + r = 0.
double f1_score(double precision, double recall);

/// Macro averages run over the classes that occur in `truth`.
MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted, int num_classes);

}  // namespace vcemo
