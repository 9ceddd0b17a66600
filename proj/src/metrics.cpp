#include "vcemo/metrics.hpp"

#include "vcemo/error.hpp"

namespace vcemo {

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (truth.size() != predicted.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(truth.size()) + " labels vs " +
                                          std::to_string(predicted.size()) + " predictions");
  }
  if (truth.empty()) throw Error(Errc::EmptyEvalSet, "no labels to score");
  if (num_classes < 1) throw Error(Errc::InvalidConfig, "num_classes must be positive");

  MetricsReport r;
  r.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw Error(Errc::LabelOutOfRange, "label pair (" + std::to_string(t) + ", " + std::to_string(p) +
                                             ") outside 0.." + std::to_string(num_classes - 1));
    }
    ++r.confusion(t, p);
  }

  const double n = static_cast<double>(truth.size());
  r.accuracy = r.confusion.trace() / n;
  r.weighted_accuracy = r.accuracy;
  int present = 0;
  double f1_sum = 0.0;
  double recall_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    ClassMetrics m;
    const long tp = r.confusion(c, c);
    const long row = r.confusion.row(c).sum();
    const long col = r.confusion.col(c).sum();
    m.support = row;
    m.precision = col > 0 ? static_cast<double>(tp) / col : 0.0;
    m.recall = row > 0 ? static_cast<double>(tp) / row : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    if (row > 0) {
      ++present;
      f1_sum += m.f1;
      recall_sum += m.recall;
      r.weighted_f1 += m.f1 * row / n;
    }
    r.per_class.push_back(m);
  }
  r.macro_f1 = f1_sum / present;
  r.unweighted_accuracy = recall_sum / present;
  return r;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["num_classes"] = num_classes();
  j["total"] = total();
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["weighted_f1"] = weighted_f1;
  j["weighted_accuracy"] = weighted_accuracy;
  j["unweighted_accuracy"] = unweighted_accuracy;
  if (!class_names.empty()) j["class_names"] = class_names;
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
    std::vector<int> row(confusion.cols());
    for (Eigen::Index c = 0; c < confusion.cols(); ++c) row[static_cast<std::size_t>(c)] = confusion(r, c);
    rows.push_back(row);
  }
  j["confusion"] = rows;
  auto per = nlohmann::ordered_json::array();
  for (const auto& m : per_class) {
    per.push_back({{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}});
  }
  j["per_class"] = per;
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  const auto& rows = j.at("confusion");
  const auto c = static_cast<Eigen::Index>(rows.size());
  r.confusion = Eigen::MatrixXi::Zero(c, c);
  for (Eigen::Index i = 0; i < c; ++i)
    for (Eigen::Index k = 0; k < c; ++k) r.confusion(i, k) = rows.at(i).at(k).get<int>();
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.weighted_f1 = j.value("weighted_f1", 0.0);
  r.weighted_accuracy = j.value("weighted_accuracy", r.accuracy);
  r.unweighted_accuracy = j.value("unweighted_accuracy", 0.0);
  if (j.contains("class_names")) r.class_names = j["class_names"].get<std::vector<std::string>>();
  if (j.contains("per_class")) {
    for (const auto& m : j["per_class"]) {
      r.per_class.push_back({m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>(),
                             m.value("support", 0L)});
    }
  }
  return r;
}

}  // namespace vcemo
