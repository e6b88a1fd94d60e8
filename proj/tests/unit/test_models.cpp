#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "maskprivacy/image.hpp"
#include "maskprivacy/models.hpp"
#include "maskprivacy/nn/loss.hpp"
#include "maskprivacy/synthetic.hpp"
#include "support.hpp"

using namespace maskprivacy;

namespace {

nn::ResNetConfig tiny_arch() {
  nn::ResNetConfig a;
  a.base_width = 4;
  a.blocks = {1, 1, 1, 1};
  a.input_size = 32;
  return a;
}

ImageSet synthetic_set(std::size_t n, int size, std::uint64_t seed) {
  ImageSet set;
  set.labels = testing::synthetic_labels(n, seed);
  for (const auto& l : set.labels) set.images.push_back(to_planar(render_synthetic_face(l, 64, seed), size));
  return set;
}

PredictionRecord reg(int truth, double pred) {
  PredictionRecord r;
  r.truth = {"x", truth, Sex::male, Race::white};
  r.task = Task::age_reg;
  r.predicted_age = pred;
  return r;
}

}  // namespace

TEST_CASE("checkpoint selection") {
  const std::vector<double> m = {0.5, 0.9, 0.9, 0.7};
  CHECK(select_checkpoint(m) == 1);  // index 1 = epoch 2
  const std::vector<double> flat = {0.3, 0.3};
  CHECK(select_checkpoint(flat) == 0);
  CHECK_THROWS(select_checkpoint(std::vector<double>{}));
}

TEST_CASE("task specs") {
  CHECK(TaskSpec::for_task(Task::sex_cls).head_size == 2);
  CHECK(TaskSpec::for_task(Task::race_cls).head_size == 5);
  CHECK(TaskSpec::for_task(Task::age_cls).head_size == 7);
  CHECK(TaskSpec::for_task(Task::age_reg).head_size == 1);
  auto bad = TaskSpec::for_task(Task::age_reg);
  bad.head_size = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigMismatch);
  CHECK_THROWS_AS(AttributeModel(bad, tiny_arch(), 0), ConfigMismatch);
  CHECK(parse_task("age-cls") == Task::age_cls);
  CHECK_THROWS(parse_task("height"));
}

TEST_CASE("head output sizes") {
  auto set = synthetic_set(3, 32, 1);
  for (auto t : {Task::sex_cls, Task::race_cls, Task::age_cls, Task::age_reg}) {
    AttributeModel model(TaskSpec::for_task(t), tiny_arch(), 3);
    auto out = model.forward(set.images, false);
    CHECK(out.rows() == head_size(t));
    CHECK(out.cols() == 3);
  }
}

TEST_CASE("one step lowers the batch loss") {
  auto set = synthetic_set(16, 32, 2);
  for (auto t : {Task::sex_cls, Task::age_reg}) {
    AttributeModel model(TaskSpec::for_task(t), tiny_arch(), 4);
    std::vector<PlanarImage> xs;
    std::vector<int> cls;
    std::vector<float> target;
    for (std::size_t i = 0; i < set.size(); ++i) {
      xs.push_back(standardize(set.images[i]));
      if (t == Task::sex_cls) cls.push_back(truth_class(set.labels[i], t));
      else target.push_back(static_cast<float>((set.labels[i].age_years - 50) / 30.0));
    }
    auto loss_of = [&](const nn::Matrix<float>& out) {
      return t == Task::sex_cls ? nn::cross_entropy<float>(out, cls) : nn::mean_squared_error<float>(out, target);
    };
    nn::Sgd<float> opt(model.parameters(), 1e-3f, 0.9f);
    auto before = loss_of(model.forward(xs, true));
    opt.zero_grad();
    model.backward(before.grad);
    opt.step();
    auto after = loss_of(model.forward(xs, true));
    CHECK(after.loss < before.loss);
  }
}

TEST_CASE("checkpoint round-trip and corruption") {
  testing::TempDir dir("ckpt");
  auto set = synthetic_set(4, 32, 3);
  AttributeModel model(TaskSpec::for_task(Task::race_cls), tiny_arch(), 5);
  model.save(dir.path / "m.ckpt", 3, 0.4);
  auto loaded = AttributeModel::load(dir.path / "m.ckpt");
  CHECK(loaded.task().task == Task::race_cls);
  CHECK(loaded.arch() == tiny_arch());
  const auto a = model.forward(set.images, false), b = loaded.forward(set.images, false);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);

  // flip one byte in the middle
  std::fstream f(dir.path / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(0, std::ios::end);
  const auto size = static_cast<std::streamoff>(f.tellg());
  f.seekg(size / 2);
  char c;
  f.read(&c, 1);
  c = static_cast<char>(c ^ 0x5A);
  f.seekp(size / 2);
  f.write(&c, 1);
  f.close();
  CHECK_THROWS_AS(AttributeModel::load(dir.path / "m.ckpt"), CorruptCheckpoint);

  std::ofstream(dir.path / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(AttributeModel::load(dir.path / "junk.ckpt"), CorruptCheckpoint);
  CHECK_THROWS_AS(AttributeModel::load(dir.path / "missing.ckpt"), CorruptCheckpoint);
}

TEST_CASE("predictions are normalised and repeatable") {
  auto set = synthetic_set(6, 32, 4);
  AttributeModel model(TaskSpec::for_task(Task::age_cls), tiny_arch(), 6);
  auto r1 = predict(model, set, 4), r2 = predict(model, set, 4);
  REQUIRE(r1.size() == 6);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    double sum = 0;
    for (double s : r1[i].scores) {
      CHECK(s >= 0.0);
      sum += s;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r1[i].scores == r2[i].scores);
    CHECK(r1[i].predicted_class == r2[i].predicted_class);
  }
}

TEST_CASE("evaluate") {
  auto m = evaluate({reg(10, 13), reg(20, 16)});
  CHECK(*m.mae == doctest::Approx(3.5));
  CHECK(*m.rmse == doctest::Approx(3.5355).epsilon(1e-4));
  m = evaluate({reg(10, 10), reg(20, 20)});
  CHECK(*m.mae == 0.0);
  CHECK(*m.rmse == 0.0);
  CHECK_THROWS_AS(evaluate({}), EmptyInput);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PredictionRecord> rs;
    for (int i = 0; i < 10; ++i) rs.push_back(reg(static_cast<int>(rng() % 90), static_cast<double>(rng() % 90)));
    auto e = evaluate(rs);
    CHECK(*e.rmse >= *e.mae - 1e-12);
  }
}

TEST_CASE("record files round-trip") {
  testing::TempDir dir("records");
  auto set = synthetic_set(5, 32, 5);
  AttributeModel cls(TaskSpec::for_task(Task::race_cls), tiny_arch(), 1);
  auto records = predict(cls, set);
  write_records(records, dir.path / "c.csv");
  auto back = read_records(dir.path / "c.csv");
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].truth == records[i].truth);
    CHECK(back[i].task == Task::race_cls);
    CHECK(back[i].predicted_class == records[i].predicted_class);
    CHECK(back[i].scores.size() == 5);
  }
  std::ifstream in(dir.path / "c.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "image_id,true,pred,score_0,score_1,score_2,score_3,score_4");

  std::vector<PredictionRecord> regs = {reg(10, 13.5), reg(20, 16)};
  regs[0].truth.image_id = "10_0_0_a.jpg";
  regs[1].truth.image_id = "20_0_0_b.jpg";
  write_records(regs, dir.path / "r.csv");
  auto rb = read_records(dir.path / "r.csv");
  CHECK(rb[0].task == Task::age_reg);
  CHECK(rb[0].predicted_age == doctest::Approx(13.5));
}

TEST_CASE("fine-tuning keeps the best validation checkpoint") {
  testing::TempDir dir("finetune");
  auto train = synthetic_set(40, 32, 6), val = synthetic_set(12, 32, 7);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.arch = tiny_arch();
  cfg.seed = 2;
  std::vector<int> seen;
  auto res = finetune(TaskSpec::for_task(Task::sex_cls), train, val, cfg, dir.path / "best.ckpt",
                      [&](int e, double, double) { seen.push_back(e); });
  CHECK(seen == std::vector<int>{1, 2, 3});
  REQUIRE(res.history.size() == 4);
  CHECK(res.history[0].epoch == 0);
  double best = res.history[0].val_metric;
  for (const auto& h : res.history) best = std::max(best, h.val_metric);
  CHECK(res.best.val_metric == best);
  CHECK(res.best.val_metric >= res.history[0].val_metric);
  auto model = AttributeModel::load(dir.path / "best.ckpt");
  CHECK(validation_metric(predict(model, val)) == doctest::Approx(res.best.val_metric));

  CHECK_THROWS_AS(finetune(TaskSpec::for_task(Task::sex_cls), train, ImageSet{}, cfg, dir.path / "x.ckpt"),
                  EmptyPartition);
}

TEST_CASE("pretraining smoke run") {
  testing::TempDir dir("pretrain");
  auto set = synthetic_set(256, 32, 8);
  PretrainConfig cfg;
  // the first couple of epochs can rise while the key encoder lags
  cfg.epochs = 12;
  cfg.batch_size = 128;
  cfg.arch = tiny_arch();
  cfg.projection_dim = 32;
  cfg.seed = 11;
  auto a = pretrain_representation(set.images, cfg, dir.path / "a.ckpt");
  REQUIRE(a.loss_curve.size() == 13);
  REQUIRE(a.train_loss.size() == 12);
  CHECK(a.loss_curve.back() < a.loss_curve.front());
  CHECK(std::filesystem::exists(dir.path / "a.ckpt"));
  auto b = pretrain_representation(set.images, cfg, dir.path / "b.ckpt");
  for (std::size_t i = 0; i < 13; ++i) CHECK(std::abs(a.loss_curve[i] - b.loss_curve[i]) < 1e-4);

  AttributeModel model(TaskSpec::for_task(Task::sex_cls), tiny_arch(), 0);
  model.load_backbone(dir.path / "a.ckpt");
  auto other = tiny_arch();
  other.base_width = 8;
  AttributeModel wrong(TaskSpec::for_task(Task::sex_cls), other, 0);
  CHECK_THROWS_AS(wrong.load_backbone(dir.path / "a.ckpt"), ConfigMismatch);

  cfg.batch_size = 200;
  CHECK_THROWS_AS(pretrain_representation(set.images, cfg, dir.path / "c.ckpt"), InsufficientData);
}
