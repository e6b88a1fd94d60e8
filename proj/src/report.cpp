#include "maskprivacy/report.hpp"

#include <fstream>

#include "maskprivacy/image.hpp"

namespace maskprivacy {

using nlohmann::json;

json to_json(const TestResult& r) {
  return {{"statistic", r.statistic}, {"df", r.df}, {"p_value", r.p_value}, {"tail", r.tail == Tail::one ? "one" : "two"}};
}

json to_json(const MannWhitneyResult& r) {
  return {{"u_a", r.u_a},           {"u_b", r.u_b},           {"z", r.z},         {"p_value", r.p_value},
          {"tail", "one"},          {"alternative", "a > b"}, {"exact", r.exact}, {"degenerate", r.degenerate}};
}

json to_json(const SubgroupReport& r) {
  json levels = json::array();
  for (const auto& l : r.levels)
    levels.push_back({{"level", l.name}, {"support", l.support}, {"correct", l.correct}, {"accuracy", l.accuracy}});
  return {{"group_by", to_string(r.group_by)}, {"levels", levels}, {"empty_levels", r.empty_levels}};
}

json analysis_report(const std::vector<PredictionRecord>& records, const std::vector<Attribute>& group_by) {
  const auto m = evaluate(records);
  json out = {{"task", to_string(m.task)}, {"count", records.size()}};
  if (m.accuracy) out["accuracy"] = *m.accuracy;
  if (m.mae) out["mae"] = *m.mae;
  if (m.rmse) out["rmse"] = *m.rmse;
  if (!is_classification(m.task)) return out;

  const auto cm = confusion_matrix(records);
  out["confusion"] = json::array();
  for (Eigen::Index i = 0; i < cm.rows(); ++i) {
    std::vector<int> row(cm.cols());
    for (Eigen::Index j = 0; j < cm.cols(); ++j) row[static_cast<std::size_t>(j)] = cm(i, j);
    out["confusion"].push_back(row);
  }
  out["groups"] = json::array();
  for (Attribute a : group_by) {
    json g = to_json(subgroup_accuracy(records, a));
    try {
      g["chi_square"] = to_json(chi_square_independence(outcome_table(records, a)));
    } catch (const ZeroMargin& e) {
      g["chi_square"] = {{"error", e.what()}};
    }
    out["groups"].push_back(std::move(g));
  }
  return out;
}

void write_confusion_csv(const Eigen::MatrixXi& counts, Task task, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "true\\pred";
  for (Eigen::Index j = 0; j < counts.cols(); ++j) out << ',' << class_name(task, static_cast<int>(j));
  out << '\n';
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    out << class_name(task, static_cast<int>(i));
    for (Eigen::Index j = 0; j < counts.cols(); ++j) out << ',' << counts(i, j);
    out << '\n';
  }
}

void write_confusion_heatmap(const Eigen::MatrixXi& counts, const std::filesystem::path& path, int cell) {
  const auto k = static_cast<int>(counts.rows());
  Image img(k * cell, k * cell, {255, 255, 255});
  for (int i = 0; i < k; ++i) {
    const double total = counts.row(i).sum();
    for (int j = 0; j < k; ++j) {
      const double f = total > 0 ? counts(i, j) / total : 0.0;
      const auto shade = static_cast<std::uint8_t>(255 - std::lround(f * 215));
      for (int y = i * cell + 1; y < (i + 1) * cell - 1; ++y)
        for (int x = j * cell + 1; x < (j + 1) * cell - 1; ++x) img.set(x, y, {shade, shade, 255});
    }
  }
  save_image(img, path);
}

void write_subgroup_bars(const SubgroupReport& report, const std::filesystem::path& path) {
  const int bar = 24, gap = 8, height = 200;
  const int n = static_cast<int>(report.levels.size());
  Image img(std::max(1, n * (bar + gap) + gap), height + 2 * gap, {255, 255, 255});
  for (int i = 0; i < n; ++i) {
    const int h = static_cast<int>(std::lround(report.levels[static_cast<std::size_t>(i)].accuracy * height));
    const int x0 = gap + i * (bar + gap);
    for (int y = gap + height - h; y < gap + height; ++y)
      for (int x = x0; x < x0 + bar; ++x) img.set(x, y, {60, 90, 170});
  }
  for (int x = 0; x < img.width; ++x) img.set(x, gap + height, {0, 0, 0});
  save_image(img, path);
}

}  // namespace maskprivacy
