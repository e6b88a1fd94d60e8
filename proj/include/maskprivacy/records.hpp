#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskprivacy/dataset.hpp"

namespace maskprivacy {

enum class Task { sex_cls, race_cls, age_cls, age_reg };

std::string to_string(Task t);
/// Accepts both the enum spelling ("sex_cls") and the CLI one ("sex", "age-reg").
Task parse_task(const std::string& s);
bool is_classification(Task t);
int head_size(Task t);

/// Class index of the ground truth for a classification task.
int truth_class(const AttributeLabel& label, Task t);
std::string class_name(Task t, int cls);

struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One prediction for one image. Ground-truth attributes travel with the
/// record so any record set can be regrouped by sex, race or age bin.
struct PredictionRecord {
  AttributeLabel truth;
  Task task = Task::sex_cls;
  int predicted_class = -1;
  std::vector<double> scores;
  double predicted_age = 0.0;

  int true_class() const { return truth_class(truth, task); }
  bool correct() const { return is_classification(task) && predicted_class == true_class(); }
};

struct Metrics {
  Task task = Task::sex_cls;
  std::size_t count = 0;
  std::optional<double> accuracy;
  std::optional<double> mae;
  std::optional<double> rmse;
};

/// accuracy = correct/total for classification; MAE and RMSE in years for
/// regression. Throws EmptyInput.
Metrics evaluate(const std::vector<PredictionRecord>& records);

/// CSV: `image_id,true,pred,score_0..score_k` or `image_id,true_age,pred_age`.
void write_records(const std::vector<PredictionRecord>& records, const std::filesystem::path& path);
/// Reads the CSV back. Attributes are recovered by parsing image_id as a UTK
/// filename; the task follows from the header (score count or true_age).
std::vector<PredictionRecord> read_records(const std::filesystem::path& path);

}  // namespace maskprivacy
