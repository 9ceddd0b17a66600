#pragma once

#include <string>

#include <json.hpp>

namespace vcemo {

/// Renders a metrics document as an aligned text table. Accepted shapes:
///   a single report ({"confusion": ...}),
///   a run ({"name", "classes", "metrics"}) or an array of runs,
///   {"runs": [...]}, {"ablation": [...]}, {"folds": [...], "mean": {...}}.
/// Runs and ablation rows get Accuracy / F1-score columns per class count.
std::string render_report(const nlohmann::json& doc);

}  // namespace vcemo
