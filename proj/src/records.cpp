#include "maskprivacy/records.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace maskprivacy {

std::string to_string(Task t) {
  switch (t) {
    case Task::sex_cls: return "sex_cls";
    case Task::race_cls: return "race_cls";
    case Task::age_cls: return "age_cls";
    case Task::age_reg: return "age_reg";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "sex_cls" || s == "sex") return Task::sex_cls;
  if (s == "race_cls" || s == "race") return Task::race_cls;
  if (s == "age_cls" || s == "age-cls") return Task::age_cls;
  if (s == "age_reg" || s == "age-reg") return Task::age_reg;
  throw std::invalid_argument("unknown task '" + s + "' (sex|race|age-cls|age-reg)");
}

bool is_classification(Task t) { return t != Task::age_reg; }

int head_size(Task t) {
  switch (t) {
    case Task::sex_cls: return kSexClasses;
    case Task::race_cls: return kRaceClasses;
    case Task::age_cls: return kAgeBins;
    case Task::age_reg: return 1;
  }
  return 0;
}

int truth_class(const AttributeLabel& label, Task t) {
  switch (t) {
    case Task::sex_cls: return static_cast<int>(label.sex);
    case Task::race_cls: return static_cast<int>(label.race);
    case Task::age_cls: return static_cast<int>(bin_age(label.age_years));
    case Task::age_reg: break;
  }
  throw std::invalid_argument("regression task has no class index");
}

std::string class_name(Task t, int cls) {
  switch (t) {
    case Task::sex_cls: return level_name(Attribute::sex, cls);
    case Task::race_cls: return level_name(Attribute::race, cls);
    case Task::age_cls: return level_name(Attribute::age_bin, cls);
    case Task::age_reg: break;
  }
  return std::to_string(cls);
}

Metrics evaluate(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw EmptyInput("evaluate: no records");
  Metrics m;
  m.task = records.front().task;
  m.count = records.size();
  if (is_classification(m.task)) {
    std::size_t correct = 0;
    for (const auto& r : records) correct += r.correct();
    m.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  } else {
    double abs_sum = 0.0, sq_sum = 0.0;
    for (const auto& r : records) {
      double e = r.predicted_age - r.truth.age_years;
      abs_sum += std::abs(e);
      sq_sum += e * e;
    }
    m.mae = abs_sum / records.size();
    m.rmse = std::sqrt(sq_sum / records.size());
  }
  return m;
}

void write_records(const std::vector<PredictionRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write records " + path.string());
  out << std::setprecision(8);
  const Task task = records.empty() ? Task::sex_cls : records.front().task;
  if (is_classification(task)) {
    out << "image_id,true,pred";
    for (int k = 0; k < head_size(task); ++k) out << ",score_" << k;
    out << '\n';
    for (const auto& r : records) {
      out << r.truth.image_id << ',' << r.true_class() << ',' << r.predicted_class;
      for (double s : r.scores) out << ',' << s;
      out << '\n';
    }
  } else {
    out << "image_id,true_age,pred_age\n";
    for (const auto& r : records) out << r.truth.image_id << ',' << r.truth.age_years << ',' << r.predicted_age << '\n';
  }
}

std::vector<PredictionRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read records " + path.string());
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  Task task;
  if (cols.size() == 3 && cols[1] == "true_age") {
    task = Task::age_reg;
  } else {
    const auto k = static_cast<int>(cols.size()) - 3;
    if (k == kSexClasses) task = Task::sex_cls;
    else if (k == kRaceClasses) task = Task::race_cls;
    else if (k == kAgeBins) task = Task::age_cls;
    else throw std::runtime_error(path.string() + ": cannot infer task from header '" + header + "'");
  }

  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> f;
    std::string c;
    while (std::getline(ls, c, ',')) f.push_back(c);
    if (f.size() != cols.size()) throw std::runtime_error(path.string() + ": bad row '" + line + "'");
    PredictionRecord r;
    r.truth = parse_label(f[0]);
    r.task = task;
    if (task == Task::age_reg) {
      r.predicted_age = std::stod(f[2]);
    } else {
      if (std::stoi(f[1]) != r.true_class())
        throw std::runtime_error(path.string() + ": true class disagrees with filename label for " + f[0]);
      r.predicted_class = std::stoi(f[2]);
      for (std::size_t i = 3; i < f.size(); ++i) r.scores.push_back(std::stod(f[i]));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace maskprivacy
