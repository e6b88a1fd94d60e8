#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "maskprivacy/checksum.hpp"
#include "maskprivacy/dataset.hpp"
#include "maskprivacy/mask.hpp"
#include "maskprivacy/models.hpp"
#include "maskprivacy/pipeline.hpp"
#include "maskprivacy/privacy.hpp"
#include "maskprivacy/report.hpp"
#include "maskprivacy/stats.hpp"
#include "maskprivacy/synthetic.hpp"
#include "maskprivacy/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maskprivacy;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

nn::ResNetConfig arch_from(int width, const std::vector<int>& blocks, int size) {
  nn::ResNetConfig a;
  a.base_width = width;
  if (blocks.size() != 4) throw std::invalid_argument("--blocks needs four integers");
  std::copy(blocks.begin(), blocks.end(), a.blocks.begin());
  a.input_size = size;
  return a;
}

std::vector<AttributeLabel> labels_for(const fs::path& dir, const std::optional<fs::path>& split_path,
                                       const std::string& partition) {
  if (!split_path) return scan_labels(dir).labels;
  return read_manifest(*split_path).labels(parse_partition(partition));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-face attribute inference and privacy analysis"};
  app.set_version_flag("--version", std::string("maskprivacy ") + kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed overriding every seeded step");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // run
  auto* run = app.add_subcommand("run", "Run the configured pipeline");
  fs::path config_path;
  bool validate_only = false;
  run->add_option("config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  run->add_flag("--validate", validate_only, "Only check the configuration");

  // mask-synth
  auto* ms = app.add_subcommand("mask-synth", "Paint synthetic masks onto a folder of faces");
  fs::path ms_in, ms_out;
  std::string coverage = "high", shape = "round", color = "B2BEB5";
  double opacity = 1.0;
  std::optional<fs::path> pts_dir;
  ms->add_option("--in", ms_in)->required()->check(CLI::ExistingDirectory);
  ms->add_option("--out", ms_out)->required();
  ms->add_option("--coverage", coverage)->check(CLI::IsMember({"medium", "high"}));
  ms->add_option("--shape", shape)->check(CLI::IsMember({"round", "pointed"}));
  ms->add_option("--color", color, "RRGGBB");
  ms->add_option("--opacity", opacity)->check(CLI::Range(0.0, 1.0));
  ms->add_option("--pts", pts_dir, "Directory of .pts files from an external landmark detector")
      ->check(CLI::ExistingDirectory);

  // split
  auto* sp = app.add_subcommand("split", "Write a train/val/test split manifest");
  fs::path sp_in, sp_out;
  std::string kind = "random";
  std::vector<std::string> balance_on;
  std::size_t quota = 0;
  sp->add_option("--in", sp_in)->required()->check(CLI::ExistingDirectory);
  sp->add_option("--out", sp_out)->required();
  sp->add_option("--kind", kind)->check(CLI::IsMember({"random", "uniform"}));
  sp->add_option("--balance-on", balance_on)->delimiter(',');
  sp->add_option("--quota", quota, "Test images per stratum (uniform split)");

  // train
  auto* tr = app.add_subcommand("train", "Fine-tune one attribute model");
  std::string task = "sex", aug = "basic";
  fs::path tr_split, tr_images, tr_out = "model.ckpt";
  std::optional<fs::path> pretrain;
  TrainConfig tcfg;
  int width = 8, size = 64;
  std::vector<int> blocks = {3, 4, 6, 3};
  tr->add_option("--task", task)->check(CLI::IsMember({"sex", "race", "age-cls", "age-reg"}));
  tr->add_option("--split", tr_split)->required()->check(CLI::ExistingFile);
  tr->add_option("--images", tr_images, "Image folder named in the split")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--epochs", tcfg.epochs)->capture_default_str();
  tr->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  tr->add_option("--batch", tcfg.batch_size)->capture_default_str();
  tr->add_option("--momentum", tcfg.momentum)->capture_default_str();
  tr->add_option("--weight-decay", tcfg.weight_decay)->capture_default_str();
  tr->add_option("--aug", aug)->check(CLI::IsMember({"none", "basic", "randaugment"}));
  tr->add_option("--pretrain", pretrain, "Backbone checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--width", width, "Stem width")->capture_default_str();
  tr->add_option("--blocks", blocks, "Blocks per stage")->expected(4)->delimiter(',');
  tr->add_option("--size", size, "Input resolution")->capture_default_str();
  tr->add_option("--out", tr_out)->capture_default_str();

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "Momentum-contrast pretraining of a backbone");
  fs::path pt_split, pt_images, pt_out = "backbone.ckpt";
  PretrainConfig pcfg;
  pt->add_option("--split", pt_split)->required()->check(CLI::ExistingFile);
  pt->add_option("--images", pt_images)->required()->check(CLI::ExistingDirectory);
  pt->add_option("--epochs", pcfg.epochs)->capture_default_str();
  pt->add_option("--batch", pcfg.batch_size)->capture_default_str();
  pt->add_option("--lr", pcfg.learning_rate)->capture_default_str();
  pt->add_option("--queue", pcfg.queue_size)->capture_default_str();
  pt->add_option("--width", width)->capture_default_str();
  pt->add_option("--blocks", blocks)->expected(4)->delimiter(',');
  pt->add_option("--size", size)->capture_default_str();
  pt->add_option("--out", pt_out)->capture_default_str();

  // predict
  auto* pr = app.add_subcommand("predict", "Write prediction records for a folder");
  fs::path pr_ckpt, pr_in, pr_out;
  std::optional<fs::path> pr_split;
  std::string partition = "test";
  pr->add_option("--ckpt", pr_ckpt)->required()->check(CLI::ExistingFile);
  pr->add_option("--in", pr_in)->required()->check(CLI::ExistingDirectory);
  pr->add_option("--out", pr_out)->required();
  pr->add_option("--split", pr_split, "Restrict to one partition of this split")->check(CLI::ExistingFile);
  pr->add_option("--partition", partition)->check(CLI::IsMember({"train", "val", "test"}));

  // analyze
  auto* an = app.add_subcommand("analyze", "Confusion, subgroup accuracy and significance tests");
  std::optional<fs::path> records_path, survey_path, confusion_out, plots_dir;
  fs::path an_out = "report.json";
  std::vector<std::string> group_by = {"sex", "race", "age_bin"};
  std::string sample_a, sample_b;
  bool exact = false;
  an->add_option("--records", records_path)->check(CLI::ExistingFile);
  an->add_option("--group-by", group_by)->delimiter(',')->check(CLI::IsMember({"sex", "race", "age_bin"}));
  an->add_option("--out", an_out)->capture_default_str();
  an->add_option("--confusion", confusion_out, "Confusion matrix CSV");
  an->add_option("--plots", plots_dir, "Directory for heat map and bar chart images");
  an->add_option("--survey", survey_path, "CSV holding two ordinal columns")->check(CLI::ExistingFile);
  an->add_option("--sample-a", sample_a, "Column tested as the larger sample");
  an->add_option("--sample-b", sample_b);
  an->add_flag("--exact", exact, "Exact Mann-Whitney enumeration (small samples)");

  // pvi
  auto* pv = app.add_subcommand("pvi", "Privacy vulnerability index for two modalities");
  std::optional<fs::path> rii_path;
  fs::path pred_face, pred_masked, pv_out = "pvi_report.json";
  pv->add_option("--rii", rii_path, "Survey CSV; reference weights when omitted")->check(CLI::ExistingFile);
  pv->add_option("--pred-face", pred_face)->required()->check(CLI::ExistingFile);
  pv->add_option("--pred-masked", pred_masked)->required()->check(CLI::ExistingFile);
  pv->add_option("--out", pv_out)->capture_default_str();

  // synth
  auto* sy = app.add_subcommand("synth", "Write a labelled synthetic face set");
  fs::path sy_out;
  std::size_t sy_count = 500;
  int sy_size = 128;
  sy->add_option("--out", sy_out)->required();
  sy->add_option("--count", sy_count)->capture_default_str();
  sy->add_option("--size", sy_size)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  const std::uint64_t seed = g.seed.value_or(0);

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (*run) {
      auto cfg = load_config(config_path);
      if (g.seed) {
        cfg.split.seed = *g.seed;
        cfg.train.seed = *g.seed;
        if (cfg.pretrain) cfg.pretrain->seed = *g.seed;
      }
      if (app.count("--jobs")) cfg.jobs = g.jobs;
      stage = "config";
      if (auto diags = validate_config(cfg); !diags.empty()) {
        for (const auto& d : diags) std::cerr << "config: " << d.field << ": " << d.message << "\n";
        std::cerr << "maskprivacy: stage 'config' failed\n";
        return 2;
      }
      if (validate_only) {
        std::cout << "config ok\n";
        return 0;
      }
      stage = "run";
      const auto manifest = run_pipeline(cfg, &std::cerr);
      for (const auto& s : manifest.stages) std::cout << s.name << "\t" << s.status << "\t" << s.seconds << "\n";
    } else if (*ms) {
      MaskSpec spec;
      spec.coverage = parse_coverage(coverage);
      spec.shape = parse_shape(shape);
      spec.color = parse_color(color);
      spec.opacity = opacity;
      auto pipeline = MaskPipeline::heuristic();
      if (pts_dir) pipeline.landmarks = std::make_shared<PtsFileLandmarkProvider>(*pts_dir);
      const auto summary = mask_dataset(ms_in, ms_out, spec, g.jobs, pipeline);
      std::cout << "ok " << summary.ok_count << " failed " << summary.failures.size() << "\n";
    } else if (*sp) {
      auto scan = scan_labels(sp_in);
      for (const auto& [name, why] : scan.skipped) std::cerr << "skipped " << name << ": " << why << "\n";
      SplitManifest m;
      if (kind == "random") {
        m = make_random_split(std::move(scan.labels), seed);
      } else {
        std::vector<Attribute> attrs;
        for (const auto& a : balance_on) attrs.push_back(parse_attribute(a));
        m = make_uniform_split(std::move(scan.labels), seed, attrs, quota);
      }
      write_manifest(m, sp_out);
      std::cout << "train " << m.count(Partition::train) << " val " << m.count(Partition::val) << " test "
                << m.count(Partition::test) << "\n";
    } else if (*tr) {
      tcfg.augmentation = parse_augment(aug);
      tcfg.pretrain = pretrain;
      tcfg.arch = arch_from(width, blocks, size);
      tcfg.seed = seed;
      const auto res = finetune(TaskSpec::for_task(parse_task(task)), read_manifest(tr_split), tr_images, tcfg, tr_out,
                                [](int e, double loss, double metric) {
                                  std::cerr << "epoch " << e << " loss " << loss << " val " << metric << "\n";
                                });
      std::cout << "best epoch " << res.best.epoch << " val " << res.best.val_metric << " -> " << tr_out.string()
                << "\n";
    } else if (*pt) {
      pcfg.arch = arch_from(width, blocks, size);
      pcfg.seed = seed;
      const auto set = load_image_set(pt_images, read_manifest(pt_split).labels(Partition::train), size);
      const auto res = pretrain_representation(set.images, pcfg, pt_out);
      for (std::size_t e = 0; e < res.loss_curve.size(); ++e) std::cout << e << "\t" << res.loss_curve[e] << "\n";
    } else if (*pr) {
      auto model = AttributeModel::load(pr_ckpt);
      const auto set = load_image_set(pr_in, labels_for(pr_in, pr_split, partition), model.arch().input_size);
      const auto records = predict(model, set);
      write_records(records, pr_out);
      const auto m = evaluate(records);
      if (m.accuracy) std::cout << "accuracy " << *m.accuracy << "\n";
      if (m.mae) std::cout << "mae " << *m.mae << "\n";
    } else if (*an) {
      json report = json::object();
      if (!records_path && !survey_path) throw std::invalid_argument("analyze needs --records and/or --survey");
      if (records_path) {
        const auto records = read_records(*records_path);
        std::vector<Attribute> attrs;
        for (const auto& a : group_by) attrs.push_back(parse_attribute(a));
        report = analysis_report(records, attrs);
        if (is_classification(records.front().task)) {
          const auto cm = confusion_matrix(records);
          if (confusion_out) write_confusion_csv(cm, records.front().task, *confusion_out);
          if (plots_dir) {
            fs::create_directories(*plots_dir);
            write_confusion_heatmap(cm, *plots_dir / "confusion.png");
            for (auto a : attrs)
              write_subgroup_bars(subgroup_accuracy(records, a),
                                  *plots_dir / ("subgroup_" + std::string(to_string(a)) + ".png"));
          }
        }
      }
      if (survey_path) {
        if (sample_a.empty() || sample_b.empty()) throw std::invalid_argument("--survey needs --sample-a and --sample-b");
        const auto a = read_csv_column(*survey_path, sample_a), b = read_csv_column(*survey_path, sample_b);
        auto r = exact ? mann_whitney_exact(a, b) : mann_whitney_u(a, b);
        report["mann_whitney"] = to_json(r);
        report["mann_whitney"]["sample_a"] = sample_a;
        report["mann_whitney"]["sample_b"] = sample_b;
      }
      write_json(an_out, report);
      std::cout << report.dump(2) << "\n";
    } else if (*pv) {
      const auto s = rii_path ? compute_rii(read_survey(*rii_path)) : reference::kRii;
      const auto face = compute_pvi(s, read_predictability(pred_face), Modality::face);
      const auto masked = compute_pvi(s, read_predictability(pred_masked), Modality::masked_face);
      json report = {{"rii", s},
                     {"rii_source", rii_path ? "survey" : "reference"},
                     {"face", {{"p", face.p}, {"pvi", face.pvi}}},
                     {"masked_face", {{"p", masked.p}, {"pvi", masked.pvi}}},
                     {"reduction_percent", pvi_reduction(face, masked)}};
      write_json(pv_out, report);
      std::cout << report.dump(2) << "\n";
    } else if (*sy) {
      const auto labels = write_synthetic_dataset(sy_out, sy_count, sy_size, seed);
      std::cout << "wrote " << labels.size() << " images to " << sy_out.string() << "\n";
    }
  } catch (const StageFailure& e) {
    std::cerr << "maskprivacy: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "maskprivacy: stage '" << stage << "' failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
