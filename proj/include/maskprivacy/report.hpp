#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "maskprivacy/dataset.hpp"
#include "maskprivacy/records.hpp"
#include "maskprivacy/stats.hpp"

namespace maskprivacy {

nlohmann::json to_json(const TestResult& r);
nlohmann::json to_json(const MannWhitneyResult& r);
nlohmann::json to_json(const SubgroupReport& r);

/// Metrics plus, for classification records, subgroup accuracy and a
/// correct/incorrect independence test for each attribute in `group_by`.
/// A zero margin is reported in the JSON instead of thrown.
nlohmann::json analysis_report(const std::vector<PredictionRecord>& records, const std::vector<Attribute>& group_by);

/// Header row and column carry class names.
void write_confusion_csv(const Eigen::MatrixXi& counts, Task task, const std::filesystem::path& path);

/// Row-normalised heat map, `cell` pixels per class.
void write_confusion_heatmap(const Eigen::MatrixXi& counts, const std::filesystem::path& path, int cell = 32);

/// One bar per subgroup, height proportional to accuracy.
void write_subgroup_bars(const SubgroupReport& report, const std::filesystem::path& path);

}  // namespace maskprivacy
