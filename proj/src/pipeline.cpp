#include "maskprivacy/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <set>

#include "maskprivacy/checksum.hpp"
#include "maskprivacy/report.hpp"
#include "maskprivacy/stats.hpp"
#include "maskprivacy/version.hpp"

namespace maskprivacy {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kStageOrder = {"split", "mask", "pretrain", "train", "predict", "analyze", "pvi"};

json arch_json(const nn::ResNetConfig& a) {
  return {{"base_width", a.base_width}, {"blocks", a.blocks}, {"input_size", a.input_size}};
}

nn::ResNetConfig arch_parse(const json& j) {
  nn::ResNetConfig a;
  a.base_width = j.value("base_width", a.base_width);
  a.blocks = j.value("blocks", a.blocks);
  a.input_size = j.value("input_size", a.input_size);
  return a;
}

std::string loss_name(LossKind k) { return k == LossKind::cross_entropy ? "cross_entropy" : "mse"; }

LossKind parse_loss(const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "mse" || s == "mean_squared_error") return LossKind::mean_squared_error;
  throw ConfigError("unknown loss '" + s + "' (expected cross_entropy or mse)");
}

json train_json(const TrainConfig& t) {
  json j = {{"epochs", t.epochs},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"momentum", t.momentum},
            {"weight_decay", t.weight_decay},
            {"augmentation", to_string(t.augmentation)},
            {"arch", arch_json(t.arch)},
            {"seed", t.seed}};
  if (t.pretrain) j["pretrain"] = t.pretrain->string();
  return j;
}

json pretrain_json(const PretrainConfig& p) {
  return {{"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"learning_rate", p.learning_rate},
          {"momentum", p.momentum},
          {"weight_decay", p.weight_decay},
          {"queue_size", p.queue_size},
          {"temperature", p.temperature},
          {"key_momentum", p.key_momentum},
          {"projection_dim", p.projection_dim},
          {"arch", arch_json(p.arch)},
          {"seed", p.seed}};
}

// Field-qualified wrapper around a json lookup.
template <typename F>
auto field(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

std::string tree_or_file_sha(const fs::path& p) { return fs::is_directory(p) ? sha256_tree(p) : sha256_file(p); }

std::string names_digest(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::string all;
  for (const auto& n : names) all += n + '\n';
  return sha256_hex(all);
}

std::vector<std::string> effective_stages(const RunConfig& c) {
  if (!c.stages.empty()) {
    std::vector<std::string> out;
    for (const auto& s : kStageOrder)
      if (std::find(c.stages.begin(), c.stages.end(), s) != c.stages.end()) out.push_back(s);
    return out;
  }
  std::set<Task> tasks;
  for (const auto& t : c.tasks) tasks.insert(t.task);
  std::vector<std::string> out = {"split", "mask"};
  if (c.pretrain) out.push_back("pretrain");
  if (!c.tasks.empty()) out.insert(out.end(), {"train", "predict", "analyze"});
  if (tasks.count(Task::sex_cls) && tasks.count(Task::race_cls) && tasks.count(Task::age_cls)) out.push_back("pvi");
  return out;
}

}  // namespace

// ---- config --------------------------------------------------------------------

json to_json(const RunConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.tasks)
    tasks.push_back({{"task", to_string(t.task)}, {"head_size", t.head_size}, {"loss", loss_name(t.loss)}});
  std::vector<std::string> balance;
  for (auto a : c.split.balance_on) balance.emplace_back(to_string(a));
  json j = {{"dataset_path", c.dataset_path.string()},
            {"outputs_dir", c.outputs_dir.string()},
            {"mask",
             {{"coverage", to_string(c.mask.coverage)},
              {"shape", to_string(c.mask.shape)},
              {"color", format_color(c.mask.color)},
              {"opacity", c.mask.opacity}}},
            {"split",
             {{"kind", std::string(to_string(c.split.kind))},
              {"seed", c.split.seed},
              {"balance_on", balance},
              {"quota", c.split.quota}}},
            {"tasks", tasks},
            {"train", train_json(c.train)},
            {"face_predictability", c.face_predictability},
            {"stages", c.stages},
            {"jobs", c.jobs}};
  if (c.pretrain) j["pretrain"] = pretrain_json(*c.pretrain);
  if (c.survey_path) j["survey_path"] = c.survey_path->string();
  return j;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.dataset_path = field("dataset_path", [&] { return j.at("dataset_path").get<std::string>(); });
  c.outputs_dir = field("outputs_dir", [&] { return j.at("outputs_dir").get<std::string>(); });
  if (j.contains("mask")) {
    const auto& m = j["mask"];
    c.mask.coverage = field("mask.coverage", [&] { return parse_coverage(m.value("coverage", "high")); });
    c.mask.shape = field("mask.shape", [&] { return parse_shape(m.value("shape", "round")); });
    if (m.contains("color")) c.mask.color = field("mask.color", [&] { return parse_color(m["color"].get<std::string>()); });
    c.mask.opacity = field("mask.opacity", [&] { return m.value("opacity", 1.0); });
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    c.split.kind = field("split.kind", [&] {
      const auto k = s.value("kind", "random");
      if (k == "random") return SplitKind::random;
      if (k == "uniform") return SplitKind::uniform;
      throw ConfigError("split.kind: expected random or uniform, got '" + k + "'");
    });
    c.split.seed = field("split.seed", [&] { return s.value("seed", std::uint64_t{0}); });
    c.split.quota = field("split.quota", [&] { return s.value("quota", std::size_t{0}); });
    for (const auto& a : s.value("balance_on", std::vector<std::string>{}))
      c.split.balance_on.push_back(field("split.balance_on", [&] { return parse_attribute(a); }));
  }
  if (j.contains("tasks")) {
    for (const auto& t : j["tasks"]) {
      if (t.is_string()) {
        c.tasks.push_back(field("tasks", [&] { return TaskSpec::for_task(parse_task(t.get<std::string>())); }));
        continue;
      }
      auto spec = field("tasks[].task", [&] { return TaskSpec::for_task(parse_task(t.at("task").get<std::string>())); });
      spec.head_size = field("tasks[].head_size", [&] { return t.value("head_size", spec.head_size); });
      if (t.contains("loss")) spec.loss = field("tasks[].loss", [&] { return parse_loss(t["loss"].get<std::string>()); });
      c.tasks.push_back(spec);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    auto& tr = c.train;
    field("train", [&] {
      tr.epochs = t.value("epochs", tr.epochs);
      tr.learning_rate = t.value("learning_rate", tr.learning_rate);
      tr.batch_size = t.value("batch_size", tr.batch_size);
      tr.momentum = t.value("momentum", tr.momentum);
      tr.weight_decay = t.value("weight_decay", tr.weight_decay);
      tr.augmentation = parse_augment(t.value("augmentation", to_string(tr.augmentation)));
      tr.seed = t.value("seed", tr.seed);
      if (t.contains("arch")) tr.arch = arch_parse(t["arch"]);
      if (t.contains("pretrain")) tr.pretrain = fs::path(t["pretrain"].get<std::string>());
      return 0;
    });
  }
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    PretrainConfig pc;
    pc.arch = c.train.arch;
    pc.seed = c.train.seed;
    field("pretrain", [&] {
      pc.epochs = p.value("epochs", pc.epochs);
      pc.batch_size = p.value("batch_size", pc.batch_size);
      pc.learning_rate = p.value("learning_rate", pc.learning_rate);
      pc.momentum = p.value("momentum", pc.momentum);
      pc.weight_decay = p.value("weight_decay", pc.weight_decay);
      pc.queue_size = p.value("queue_size", pc.queue_size);
      pc.temperature = p.value("temperature", pc.temperature);
      pc.key_momentum = p.value("key_momentum", pc.key_momentum);
      pc.projection_dim = p.value("projection_dim", pc.projection_dim);
      pc.seed = p.value("seed", pc.seed);
      if (p.contains("arch")) pc.arch = arch_parse(p["arch"]);
      return 0;
    });
    c.pretrain = pc;
  }
  if (j.contains("survey_path")) c.survey_path = fs::path(j["survey_path"].get<std::string>());
  if (j.contains("face_predictability"))
    c.face_predictability = field("face_predictability", [&] { return j["face_predictability"].get<Predictability>(); });
  c.stages = field("stages", [&] { return j.value("stages", std::vector<std::string>{}); });
  c.jobs = field("jobs", [&] { return j.value("jobs", 1); });
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::vector<Diagnostic> validate_config(const RunConfig& c) {
  std::vector<Diagnostic> d;
  const auto stages = effective_stages(c);
  auto wants = [&](const std::string& s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };

  for (const auto& s : c.stages)
    if (std::find(kStageOrder.begin(), kStageOrder.end(), s) == kStageOrder.end())
      d.push_back({"stages", "unknown stage '" + s + "'; use split, mask, pretrain, train, predict, analyze or pvi"});
  if (c.dataset_path.empty() || !fs::is_directory(c.dataset_path))
    d.push_back({"dataset_path", "directory '" + c.dataset_path.string() + "' does not exist; point it at the image folder"});
  if (c.outputs_dir.empty()) d.push_back({"outputs_dir", "must be set to a writable directory"});
  if (!(c.mask.opacity >= 0.0 && c.mask.opacity <= 1.0))
    d.push_back({"mask.opacity", "must be in [0, 1]"});
  if (c.split.kind == SplitKind::uniform && c.split.balance_on.empty())
    d.push_back({"split.balance_on", "uniform split needs at least one of sex, race, age_bin"});
  if ((wants("train") || wants("predict") || wants("analyze")) && c.tasks.empty())
    d.push_back({"tasks", "no tasks listed; add any of sex, race, age-cls, age-reg"});
  for (std::size_t i = 0; i < c.tasks.size(); ++i) {
    const auto& t = c.tasks[i];
    const auto name = "tasks[" + std::to_string(i) + "]";
    if (t.head_size != head_size(t.task))
      d.push_back({name + ".head_size", "head_size " + std::to_string(t.head_size) + " does not match task " +
                                            to_string(t.task) + "; set it to " + std::to_string(head_size(t.task))});
    const auto expected = is_classification(t.task) ? LossKind::cross_entropy : LossKind::mean_squared_error;
    if (t.loss != expected)
      d.push_back({name + ".loss", "task " + to_string(t.task) + " needs loss " + loss_name(expected)});
  }
  if (c.train.epochs < 1) d.push_back({"train.epochs", "must be at least 1"});
  if (!(c.train.learning_rate > 0)) d.push_back({"train.learning_rate", "must be positive"});
  if (c.train.batch_size < 2) d.push_back({"train.batch_size", "must be at least 2 (batch norm)"});
  if (c.train.arch.base_width < 1 || c.train.arch.input_size < 32)
    d.push_back({"train.arch", "base_width must be >= 1 and input_size >= 32"});
  if (c.train.pretrain && !fs::exists(*c.train.pretrain))
    d.push_back({"train.pretrain", "checkpoint '" + c.train.pretrain->string() + "' does not exist"});
  if (c.pretrain) {
    if (c.pretrain->arch != c.train.arch)
      d.push_back({"pretrain.arch", "must equal train.arch so the backbone can be loaded"});
    if (c.pretrain->epochs < 1) d.push_back({"pretrain.epochs", "must be at least 1"});
    if (c.pretrain->batch_size < 2) d.push_back({"pretrain.batch_size", "must be at least 2"});
  }
  if (c.survey_path && !fs::exists(*c.survey_path))
    d.push_back({"survey_path", "file '" + c.survey_path->string() + "' does not exist"});
  for (const auto& a : kRankedAttributes)
    if (!c.face_predictability.count(a))
      d.push_back({"face_predictability", "missing key '" + a + "'; give age, race and sex"});
  if (wants("pvi")) {
    std::set<Task> tasks;
    for (const auto& t : c.tasks) tasks.insert(t.task);
    if (!tasks.count(Task::sex_cls) || !tasks.count(Task::race_cls) || !tasks.count(Task::age_cls))
      d.push_back({"stages", "pvi needs the sex, race and age-cls tasks"});
  }
  if (c.jobs < 1) d.push_back({"jobs", "must be at least 1"});
  return d;
}

// ---- manifest ------------------------------------------------------------------

const StageRecord* RunManifest::find(const std::string& stage) const {
  for (const auto& s : stages)
    if (s.name == stage) return &s;
  return nullptr;
}

json to_json(const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    json j = {{"name", s.name},       {"status", s.status},   {"fingerprint", s.fingerprint},
              {"inputs", s.inputs},   {"outputs", s.outputs}, {"seconds", s.seconds}};
    if (!s.error.empty()) j["error"] = s.error;
    stages.push_back(std::move(j));
  }
  return {{"tool_version", m.tool_version},
          {"config", m.config},
          {"stages", stages},
          {"training_bit_reproducible", m.training_bit_reproducible}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.tool_version = j.value("tool_version", "");
  m.config = j.value("config", json::object());
  m.training_bit_reproducible = j.value("training_bit_reproducible", false);
  for (const auto& s : j.value("stages", json::array())) {
    StageRecord r;
    r.name = s.at("name").get<std::string>();
    r.status = s.at("status").get<std::string>();
    r.fingerprint = s.value("fingerprint", "");
    r.inputs = s.value("inputs", std::map<std::string, std::string>{});
    r.outputs = s.value("outputs", std::map<std::string, std::string>{});
    r.seconds = s.value("seconds", 0.0);
    r.error = s.value("error", "");
    m.stages.push_back(std::move(r));
  }
  return m;
}

// ---- run -----------------------------------------------------------------------

namespace {

using Digests = std::map<std::string, std::string>;

class Runner {
 public:
  Runner(const RunConfig& c, std::ostream* log) : c_(c), log_(log) {
    out_ = c.outputs_dir;
    fs::create_directories(out_);
    manifest_.config = to_json(c);
    manifest_.tool_version = kVersion;
    const auto prev_path = out_ / "run_manifest.json";
    if (fs::exists(prev_path)) {
      try {
        std::ifstream in(prev_path);
        previous_ = manifest_from_json(json::parse(in));
      } catch (const std::exception&) {
        previous_.reset();  // unreadable manifest: run everything
      }
    }
  }

  fs::path split_path() const { return out_ / "split.tsv"; }
  fs::path masked_dir() const { return out_ / "masked"; }
  fs::path backbone_path() const { return out_ / "backbone.ckpt"; }
  fs::path task_dir(Task t) const { return out_ / to_string(t); }

  // Runs `body` unless a matching earlier record can be reused. `inputs`
  // returns path -> digest; `outputs` are paths relative to outputs_dir.
  template <typename Inputs, typename Body>
  void stage(const std::string& name, const json& settings, Inputs&& inputs, const std::vector<std::string>& outputs,
             Body&& body) {
    StageRecord rec;
    rec.name = name;
    try {
      rec.inputs = inputs();
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      commit(std::move(rec));
      throw StageFailure(name, manifest_.stages.back().error);
    }
    rec.fingerprint = sha256_hex(json{{"stage", name}, {"settings", settings}, {"inputs", rec.inputs}}.dump());

    if (const auto* old = previous_ ? previous_->find(name) : nullptr;
        old && old->status != "failed" && old->fingerprint == rec.fingerprint && outputs_match(*old, outputs)) {
      rec.status = "skipped";
      rec.outputs = old->outputs;
      say(name + ": up to date, skipped");
      commit(std::move(rec));
      return;
    }

    say(name + ": running");
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
      for (const auto& o : outputs) rec.outputs[o] = tree_or_file_sha(out_ / o);
      rec.status = "ran";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool failed = rec.status == "failed";
    const auto error = rec.error;
    commit(std::move(rec));
    if (failed) throw StageFailure(name, error);
    say(name + ": done in " + std::to_string(manifest_.stages.back().seconds) + " s");
  }

  std::string output_sha(const std::string& rel) const {
    for (const auto& s : manifest_.stages) {
      auto it = s.outputs.find(rel);
      if (it != s.outputs.end()) return it->second;
    }
    const auto p = out_ / rel;
    if (!fs::exists(p)) throw std::runtime_error(rel + " is missing; run the stage that produces it first");
    return tree_or_file_sha(p);
  }

  RunManifest finish() { return manifest_; }

 private:
  bool outputs_match(const StageRecord& old, const std::vector<std::string>& outputs) const {
    for (const auto& o : outputs) {
      auto it = old.outputs.find(o);
      if (it == old.outputs.end() || !fs::exists(out_ / o) || tree_or_file_sha(out_ / o) != it->second) return false;
    }
    return true;
  }

  void commit(StageRecord rec) {
    manifest_.stages.push_back(std::move(rec));
    write_file_atomic(out_ / "run_manifest.json", to_json(manifest_).dump(2) + "\n");
  }

  void say(const std::string& msg) const {
    if (log_) *log_ << "[maskprivacy] " << msg << std::endl;
  }

  const RunConfig& c_;
  std::ostream* log_;
  fs::path out_;
  RunManifest manifest_;
  std::optional<RunManifest> previous_;
};

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

}  // namespace

RunManifest run_pipeline(const RunConfig& config, std::ostream* log) {
  if (auto diags = validate_config(config); !diags.empty()) {
    std::string msg;
    for (const auto& d : diags) msg += "\n  " + d.field + ": " + d.message;
    throw StageFailure("config", "invalid configuration:" + msg);
  }
  Runner run(config, log);
  const auto stages = effective_stages(config);
  auto wants = [&](const std::string& s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  const auto data = config.dataset_path;

  if (wants("split")) {
    json settings = to_json(config)["split"];
    run.stage("split", settings, [&] { return Digests{{data.string(), names_digest(data)}}; }, {"split.tsv"}, [&] {
      auto scan = scan_labels(data);
      auto m = config.split.kind == SplitKind::random
                   ? make_random_split(std::move(scan.labels), config.split.seed)
                   : make_uniform_split(std::move(scan.labels), config.split.seed, config.split.balance_on,
                                        config.split.quota);
      write_manifest(m, run.split_path());
    });
  }

  if (wants("mask")) {
    json settings = to_json(config)["mask"];
    run.stage("mask", settings, [&] { return Digests{{data.string(), sha256_tree(data)}}; }, {"masked"}, [&] {
      mask_dataset(data, run.masked_dir(), config.mask, config.jobs);
    });
  }

  auto train_cfg = config.train;
  if (wants("pretrain")) {
    auto pc = *config.pretrain;
    run.stage("pretrain", pretrain_json(pc),
              [&] { return Digests{{"masked", run.output_sha("masked")}, {"split.tsv", run.output_sha("split.tsv")}}; },
              {"backbone.ckpt", "pretrain_loss.json"}, [&] {
                const auto split = read_manifest(run.split_path());
                const auto set = load_image_set(run.masked_dir(), split.labels(Partition::train), pc.arch.input_size);
                auto res = pretrain_representation(set.images, pc, run.backbone_path());
                write_json(config.outputs_dir / "pretrain_loss.json",
                           {{"seed", pc.seed}, {"loss_curve", res.loss_curve}, {"train_loss", res.train_loss}});
              });
  }
  if (config.pretrain && fs::exists(run.backbone_path())) train_cfg.pretrain = run.backbone_path();

  for (const auto& task : config.tasks) {
    const auto name = to_string(task.task);
    const auto dir = run.task_dir(task.task);

    if (wants("train")) {
      auto inputs = [&] {
        Digests d = {{"masked", run.output_sha("masked")}, {"split.tsv", run.output_sha("split.tsv")}};
        if (train_cfg.pretrain) d[train_cfg.pretrain->string()] = sha256_file(*train_cfg.pretrain);
        return d;
      };
      json settings = train_json(train_cfg);
      settings["task"] = name;
      settings["head_size"] = task.head_size;
      run.stage("train:" + name, settings, inputs, {name + "/model.ckpt", name + "/history.json"}, [&] {
        fs::create_directories(dir);
        const auto split = read_manifest(run.split_path());
        auto res = finetune(task, split, run.masked_dir(), train_cfg, dir / "model.ckpt",
                            [&](int epoch, double loss, double metric) {
                              if (log) *log << "  " << name << " epoch " << epoch << " loss " << loss << " val " << metric << "\n";
                            });
        json hist = json::array();
        for (const auto& h : res.history) hist.push_back({{"epoch", h.epoch}, {"val_metric", h.val_metric}});
        write_json(dir / "history.json", {{"task", name},
                                          {"seed", train_cfg.seed},
                                          {"history", hist},
                                          {"train_loss", res.train_loss},
                                          {"best", {{"epoch", res.best.epoch}, {"val_metric", res.best.val_metric}}}});
      });
    }

    if (wants("predict")) {
      run.stage("predict:" + name, json{{"task", name}},
                [&] {
                  return Digests{{name + "/model.ckpt", run.output_sha(name + "/model.ckpt")},
                                 {"split.tsv", run.output_sha("split.tsv")},
                                 {"masked", run.output_sha("masked")}};
                },
                {name + "/records.csv"}, [&] {
                  auto model = AttributeModel::load(dir / "model.ckpt");
                  const auto split = read_manifest(run.split_path());
                  const auto test = split.labels(Partition::test);
                  if (test.empty()) throw EmptyPartition("split has no test entries");
                  const auto set = load_image_set(run.masked_dir(), test, model.arch().input_size);
                  write_records(predict(model, set), dir / "records.csv");
                });
    }

    if (wants("analyze")) {
      std::vector<std::string> outs = {name + "/report.json"};
      if (is_classification(task.task)) outs.push_back(name + "/confusion.csv");
      run.stage("analyze:" + name, json{{"task", name}},
                [&] { return Digests{{name + "/records.csv", run.output_sha(name + "/records.csv")}}; },
                outs, [&] {
                  const auto records = read_records(dir / "records.csv");
                  auto report = analysis_report(records, {Attribute::sex, Attribute::race, Attribute::age_bin});
                  report["seed"] = config.split.seed;
                  write_json(dir / "report.json", report);
                  if (is_classification(task.task))
                    write_confusion_csv(confusion_matrix(records), task.task, dir / "confusion.csv");
                });
    }
  }

  if (wants("pvi")) {
    auto inputs = [&] {
      Digests d;
      for (Task t : {Task::sex_cls, Task::race_cls, Task::age_cls}) {
        const auto rel = to_string(t) + "/records.csv";
        d[rel] = run.output_sha(rel);
      }
      if (config.survey_path) d[config.survey_path->string()] = sha256_file(*config.survey_path);
      return d;
    };
    run.stage("pvi", json{{"face_predictability", config.face_predictability}}, inputs,
              {"predictability_masked.json", "pvi_report.json"}, [&] {
                const auto s = config.survey_path ? compute_rii(read_survey(*config.survey_path)) : reference::kRii;
                auto acc = [&](Task t) {
                  return *evaluate(read_records(run.task_dir(t) / "records.csv")).accuracy;
                };
                Predictability masked = {{"age", acc(Task::age_cls)}, {"race", acc(Task::race_cls)}, {"sex", acc(Task::sex_cls)}};
                write_json(config.outputs_dir / "predictability_masked.json", masked);
                const auto face = compute_pvi(s, config.face_predictability, Modality::face);
                const auto mask = compute_pvi(s, masked, Modality::masked_face);
                write_json(config.outputs_dir / "pvi_report.json",
                           {{"rii", s},
                            {"rii_source", config.survey_path ? "survey" : "reference"},
                            {"face", {{"p", face.p}, {"pvi", face.pvi}}},
                            {"masked_face", {{"p", mask.p}, {"pvi", mask.pvi}}},
                            {"reduction_percent", pvi_reduction(face, mask)},
                            {"seed", config.split.seed}});
              });
  }
  return run.finish();
}

}  // namespace maskprivacy
