#include "vcemo/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "vcemo/error.hpp"

namespace vcemo {

namespace {

using nlohmann::json;
using Table = std::vector<std::vector<std::string>>;

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string layout(const Table& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const auto& cell = rows[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      // Names left-aligned, numbers right-aligned.
      out << (c == 0 ? cell + pad : pad + cell);
      if (c + 1 < rows[i].size()) out << "  ";
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

struct Run {
  std::string name;
  int classes = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

Run read_run(const json& j, const std::string& fallback_name) {
  const json& m = j.contains("metrics") ? j["metrics"] : j;
  if (!m.contains("accuracy") || !m.contains("macro_f1")) {
    throw Error(Errc::MalformedRecord, "metrics entry lacks accuracy/macro_f1");
  }
  Run r;
  r.name = j.value("name", fallback_name);
  if (j.contains("classes")) {
    r.classes = j["classes"].get<int>();
  } else if (m.contains("num_classes")) {
    r.classes = m["num_classes"].get<int>();
  } else if (m.contains("confusion")) {
    r.classes = static_cast<int>(m["confusion"].size());
  }
  r.accuracy = m["accuracy"].get<double>();
  r.f1 = m["macro_f1"].get<double>();
  return r;
}

/// One row per name, Accuracy and F1-score columns for each class count.
std::string runs_table(const std::vector<Run>& runs, const std::string& first_header) {
  std::set<int> counts;
  std::vector<std::string> names;
  std::map<std::pair<std::string, int>, Run> cells;
  for (const auto& r : runs) {
    counts.insert(r.classes);
    if (std::find(names.begin(), names.end(), r.name) == names.end()) names.push_back(r.name);
    cells[{r.name, r.classes}] = r;
  }
  Table t;
  std::vector<std::string> header{first_header};
  for (int c : counts) {
    const std::string prefix = c > 0 ? std::to_string(c) + "-class " : "";
    header.push_back(prefix + "Accuracy");
    header.push_back(prefix + "F1-score");
  }
  t.push_back(header);
  for (const auto& name : names) {
    std::vector<std::string> row{name};
    for (int c : counts) {
      auto it = cells.find({name, c});
      row.push_back(it == cells.end() ? "-" : percent(it->second.accuracy));
      row.push_back(it == cells.end() ? "-" : percent(it->second.f1));
    }
    t.push_back(row);
  }
  return layout(t);
}

std::string folds_table(const json& doc) {
  Table t{{"Fold", "WA", "UA", "Accuracy", "F1-score"}};
  for (const auto& f : doc["folds"]) {
    const json& m = f.at("metrics");
    t.push_back({f.value("val_session", std::string("?")), percent(m.value("weighted_accuracy", 0.0)),
                 percent(m.value("unweighted_accuracy", 0.0)), percent(m.value("accuracy", 0.0)),
                 percent(m.value("macro_f1", 0.0))});
  }
  if (doc.contains("mean")) {
    const json& m = doc["mean"];
    t.push_back({"mean", percent(m.value("weighted_accuracy", 0.0)), percent(m.value("unweighted_accuracy", 0.0)),
                 percent(m.value("accuracy", 0.0)), percent(m.value("macro_f1", 0.0))});
  }
  return layout(t);
}

}  // namespace

std::string render_report(const json& doc) {
  try {
    if (doc.is_array()) {
      std::vector<Run> runs;
      for (std::size_t i = 0; i < doc.size(); ++i) runs.push_back(read_run(doc[i], "run " + std::to_string(i + 1)));
      return runs_table(runs, "Method");
    }
    if (!doc.is_object()) throw Error(Errc::MalformedRecord, "report input must be a JSON object or array");
    if (doc.contains("folds")) return folds_table(doc);
    if (doc.contains("ablation")) {
      std::vector<Run> runs;
      for (const auto& row : doc["ablation"]) runs.push_back(read_run(row, row.value("modalities", std::string("?"))));
      return runs_table(runs, "Modalities");
    }
    if (doc.contains("runs")) return render_report(doc["runs"]);
    return runs_table({read_run(doc, "model")}, "Method");
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("report input: ") + e.what());
  }
}

}  // namespace vcemo
