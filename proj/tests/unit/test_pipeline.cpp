#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "maskprivacy/pipeline.hpp"
#include "maskprivacy/synthetic.hpp"
#include "support.hpp"

using namespace maskprivacy;
namespace fs = std::filesystem;

namespace {

RunConfig desk_config(const fs::path& data, const fs::path& out) {
  RunConfig c;
  c.dataset_path = data;
  c.outputs_dir = out;
  c.split.seed = 3;
  for (auto t : {Task::sex_cls, Task::race_cls, Task::age_cls, Task::age_reg}) c.tasks.push_back(TaskSpec::for_task(t));
  c.train.epochs = 1;
  c.train.batch_size = 8;
  c.train.arch.base_width = 2;
  c.train.arch.blocks = {1, 1, 1, 1};
  c.train.arch.input_size = 32;
  c.jobs = 2;
  return c;
}

bool has_diag(const std::vector<Diagnostic>& d, const std::string& field) {
  for (const auto& x : d)
    if (x.field.find(field) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("config validation") {
  testing::TempDir data("cfg_data");
  auto c = desk_config(data.path, data.path / "out");
  CHECK(validate_config(c).empty());

  auto bad = c;
  bad.tasks[3].head_size = 7;
  auto d = validate_config(bad);
  REQUIRE(d.size() == 1);
  CHECK(d[0].field == "tasks[3].head_size");
  CHECK(d[0].message.find("age_reg") != std::string::npos);
  CHECK(d[0].message.find("7") != std::string::npos);

  bad = c;
  bad.dataset_path = data.path / "nowhere";
  CHECK(has_diag(validate_config(bad), "dataset_path"));

  bad = c;
  bad.tasks.pop_back();
  bad.tasks.erase(bad.tasks.begin());
  bad.stages = {"pvi"};
  CHECK(has_diag(validate_config(bad), "stages"));
}

TEST_CASE("config JSON round-trip") {
  testing::TempDir data("cfg_json");
  auto c = desk_config(data.path, data.path / "out");
  c.mask.coverage = Coverage::medium;
  c.split.kind = SplitKind::uniform;
  c.split.balance_on = {Attribute::sex};
  auto j = to_json(c);
  auto back = config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"outputs_dir", "x"}}), ConfigError);
  nlohmann::json broken = j;
  broken["tasks"] = {"weight"};
  CHECK_THROWS_AS(config_from_json(broken), ConfigError);
}

TEST_CASE("end-to-end desk run, reruns and stage selection") {
  testing::TempDir data("run_data"), outs("run_out");
  write_synthetic_dataset(data.path, 80, 64, 4);
  auto cfg = desk_config(data.path, outs.path / "a");

  std::ostringstream log;
  auto m = run_pipeline(cfg, &log);
  for (const auto& s : m.stages) CHECK(s.status == "ran");
  int ckpts = 0, confusions = 0, pvi = 0;
  for (const auto& s : m.stages)
    for (const auto& [path, sha] : s.outputs) {
      ckpts += path.ends_with("model.ckpt");
      confusions += path.ends_with("confusion.csv");
      pvi += path == "pvi_report.json";
      CHECK(sha.size() == 64);
    }
  CHECK(ckpts == 4);
  CHECK(confusions == 3);
  CHECK(pvi == 1);

  // no orphan files
  for (const auto& e : fs::recursive_directory_iterator(cfg.outputs_dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), cfg.outputs_dir).generic_string();
    if (rel == "run_manifest.json") continue;
    bool reachable = false;
    for (const auto& s : m.stages)
      for (const auto& [path, sha] : s.outputs) reachable |= rel == path || rel.starts_with(path + "/");
    CHECK_MESSAGE(reachable, rel);
  }

  auto again = run_pipeline(cfg, nullptr);
  REQUIRE(again.stages.size() == m.stages.size());
  for (const auto& s : again.stages) CHECK(s.status == "skipped");

  // a changed mask spec reruns mask and everything downstream, but not split
  cfg.mask.coverage = Coverage::medium;
  auto third = run_pipeline(cfg, nullptr);
  CHECK(third.find("split")->status == "skipped");
  CHECK(third.find("mask")->status == "ran");

  // split and masks reproduce byte for byte in a fresh directory
  auto fresh = desk_config(data.path, outs.path / "b");
  fresh.stages = {"mask", "split"};
  auto fm = run_pipeline(fresh, nullptr);
  CHECK(fm.stages.size() == 2);
  CHECK(fm.find("split")->outputs == m.find("split")->outputs);
  CHECK(fm.find("mask")->outputs == m.find("mask")->outputs);

  auto only_mask = desk_config(data.path, outs.path / "c");
  only_mask.stages = {"mask"};
  CHECK(run_pipeline(only_mask, nullptr).stages.size() == 1);

  auto manifest_path = cfg.outputs_dir / "run_manifest.json";
  std::ifstream in(manifest_path);
  auto j = nlohmann::json::parse(in);
  CHECK(j["tool_version"].get<std::string>().size() > 0);
  CHECK(j["config"]["split"]["seed"] == 3);
}

TEST_CASE("failures name the stage and keep partial outputs") {
  testing::TempDir data("fail_data"), outs("fail_out");
  write_synthetic_dataset(data.path, 20, 64, 5);
  auto cfg = desk_config(data.path, outs.path);
  cfg.stages = {"split", "train"};  // masks never produced
  try {
    run_pipeline(cfg, nullptr);
    FAIL("expected a stage failure");
  } catch (const StageFailure& e) {
    CHECK(e.stage.rfind("train", 0) == 0);
  }
  CHECK(fs::exists(outs.path / "split.tsv"));
  std::ifstream in(outs.path / "run_manifest.json");
  auto m = manifest_from_json(nlohmann::json::parse(in));
  REQUIRE(m.stages.size() == 2);
  CHECK(m.stages[0].status == "ran");
  CHECK(m.stages[1].status == "failed");
  CHECK(!m.stages[1].error.empty());
}
