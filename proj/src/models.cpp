#include "maskprivacy/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "maskprivacy/checksum.hpp"
#include "maskprivacy/image.hpp"
#include "maskprivacy/nn/loss.hpp"

namespace maskprivacy {
namespace {

using nlohmann::json;
using Mat = nn::Matrix<float>;

constexpr char kMagic[8] = {'M', 'P', 'C', 'K', 'P', 'T', '0', '1'};

json arch_to_json(const nn::ResNetConfig& a) {
  return {{"base_width", a.base_width}, {"blocks", a.blocks}, {"input_size", a.input_size}};
}

nn::ResNetConfig arch_from_json(const json& j) {
  nn::ResNetConfig a;
  a.base_width = j.at("base_width").get<int>();
  a.blocks = j.at("blocks").get<std::array<int, 4>>();
  a.input_size = j.at("input_size").get<int>();
  return a;
}

template <typename T>
void put(std::vector<std::uint8_t>& buf, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

void write_checkpoint(const std::filesystem::path& path, json meta, const std::vector<Mat*>& tensors) {
  json shapes = json::array();
  std::uint64_t count = 0;
  for (const auto* t : tensors) {
    shapes.push_back({t->rows(), t->cols()});
    count += static_cast<std::uint64_t>(t->size());
  }
  meta["shapes"] = shapes;
  const std::string header = meta.dump();

  std::vector<std::uint8_t> buf(kMagic, kMagic + sizeof kMagic);
  put(buf, static_cast<std::uint64_t>(header.size()));
  buf.insert(buf.end(), header.begin(), header.end());
  put(buf, count);
  for (const auto* t : tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t->data());
    buf.insert(buf.end(), p, p + t->size() * sizeof(float));
  }
  const auto digest = sha256(buf);
  buf.insert(buf.end(), digest.begin(), digest.end());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, buf);
}

struct RawCheckpoint {
  json meta;
  std::vector<float> values;
};

RawCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t min_size = sizeof kMagic + 2 * sizeof(std::uint64_t) + 32;
  if (buf.size() < min_size || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw CorruptCheckpoint(path.string() + ": not a checkpoint");
  const std::span<const std::uint8_t> body(buf.data(), buf.size() - 32);
  const auto digest = sha256(body);
  if (!std::equal(digest.begin(), digest.end(), buf.end() - 32))
    throw CorruptCheckpoint(path.string() + ": checksum mismatch");

  std::size_t off = sizeof kMagic;
  auto read_u64 = [&] {
    std::uint64_t v;
    if (off + sizeof v > body.size()) throw CorruptCheckpoint(path.string() + ": truncated");
    std::memcpy(&v, body.data() + off, sizeof v);
    off += sizeof v;
    return v;
  };
  const auto header_len = read_u64();
  if (off + header_len > body.size()) throw CorruptCheckpoint(path.string() + ": truncated header");
  RawCheckpoint raw;
  try {
    raw.meta = json::parse(body.begin() + static_cast<std::ptrdiff_t>(off),
                           body.begin() + static_cast<std::ptrdiff_t>(off + header_len));
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(path.string() + ": bad header: " + e.what());
  }
  off += header_len;
  const auto count = read_u64();
  if (off + count * sizeof(float) != body.size()) throw CorruptCheckpoint(path.string() + ": size mismatch");
  raw.values.resize(count);
  std::memcpy(raw.values.data(), body.data() + off, count * sizeof(float));
  return raw;
}

void restore(const RawCheckpoint& raw, const std::vector<Mat*>& tensors, std::size_t first_shape = 0,
             std::size_t first_value = 0) {
  const auto& shapes = raw.meta.at("shapes");
  if (shapes.size() < first_shape + tensors.size()) throw CorruptCheckpoint("checkpoint has too few tensors");
  std::size_t off = first_value;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto* t = tensors[i];
    const auto& s = shapes[first_shape + i];
    if (s[0].get<Eigen::Index>() != t->rows() || s[1].get<Eigen::Index>() != t->cols())
      throw CorruptCheckpoint("checkpoint tensor " + std::to_string(first_shape + i) + " has the wrong shape");
    if (off + static_cast<std::size_t>(t->size()) > raw.values.size()) throw CorruptCheckpoint("checkpoint truncated");
    std::memcpy(t->data(), raw.values.data() + off, static_cast<std::size_t>(t->size()) * sizeof(float));
    off += static_cast<std::size_t>(t->size());
  }
}

std::vector<Mat*> values_of(const std::vector<nn::Param<float>*>& params) {
  std::vector<Mat*> out;
  for (auto* p : params) out.push_back(&p->value);
  return out;
}

// Backbone tensors in checkpoint order: parameters, then norm buffers.
std::vector<Mat*> backbone_tensors(nn::ResNet<float>& net) {
  std::vector<nn::Param<float>*> params;
  net.parameters(params);
  auto out = values_of(params);
  std::vector<Mat*> bufs;
  net.buffers(bufs);
  out.insert(out.end(), bufs.begin(), bufs.end());
  return out;
}

// Rows of x normalised to unit length, columns as samples.
Mat l2_normalize(const Mat& x, Eigen::VectorXf& norms) {
  norms = x.colwise().norm().transpose().cwiseMax(1e-12f);
  Mat out = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) /= norms(j);
  return out;
}

}  // namespace

TaskSpec TaskSpec::for_task(Task t) {
  return {t, maskprivacy::head_size(t), is_classification(t) ? LossKind::cross_entropy : LossKind::mean_squared_error};
}

void TaskSpec::validate() const {
  if (head_size != maskprivacy::head_size(task))
    throw ConfigMismatch("head size " + std::to_string(head_size) + " does not match task " + to_string(task) +
                         " (expects " + std::to_string(maskprivacy::head_size(task)) + ")");
  const auto expected = is_classification(task) ? LossKind::cross_entropy : LossKind::mean_squared_error;
  if (loss != expected) throw ConfigMismatch("loss does not match task " + to_string(task));
}

std::size_t select_checkpoint(std::span<const double> val_metrics) {
  if (val_metrics.empty()) throw std::invalid_argument("select_checkpoint: no validation metrics");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_metrics.size(); ++i)
    if (val_metrics[i] > val_metrics[best]) best = i;
  return best;
}

ImageSet load_image_set(const std::filesystem::path& dir, const std::vector<AttributeLabel>& labels, int size) {
  ImageSet set;
  set.labels = labels;
  set.images.reserve(labels.size());
  for (const auto& l : labels) set.images.push_back(to_planar(load_image(dir / l.image_id), size));
  return set;
}

AttributeModel::AttributeModel(const TaskSpec& task, const nn::ResNetConfig& arch, std::uint64_t seed)
    : task_(task), arch_(arch) {
  task_.validate();
  std::mt19937_64 rng(seed);
  backbone_ = std::make_unique<nn::ResNet<float>>(arch, rng);
  head_ = std::make_unique<nn::Linear<float>>(arch.feature_dim(), task.head_size, rng);
}

nn::Tensor<float> make_batch(const std::vector<PlanarImage>& images) {
  if (images.empty()) throw std::invalid_argument("make_batch: empty batch");
  const int size = planar_size(images.front());
  const Eigen::Index px = static_cast<Eigen::Index>(size) * size;
  nn::Tensor<float> t(3, static_cast<int>(images.size()), size, size);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].cols() != px) throw std::invalid_argument("make_batch: mixed image sizes");
    t.data.middleCols(static_cast<Eigen::Index>(i) * px, px) = images[i];
  }
  return t;
}

nn::Matrix<float> AttributeModel::forward(const std::vector<PlanarImage>& batch, bool train) {
  auto features = backbone_->forward(make_batch(batch), train);
  return head_->forward(features, train).data;
}

void AttributeModel::backward(const nn::Matrix<float>& grad) {
  nn::Tensor<float> g(grad, static_cast<int>(grad.cols()), 1, 1);
  backbone_->backward(head_->backward(g));
}

std::vector<nn::Param<float>*> AttributeModel::parameters() {
  std::vector<nn::Param<float>*> p;
  backbone_->parameters(p);
  head_->parameters(p);
  return p;
}

void AttributeModel::save(const std::filesystem::path& path, int epoch, double val_metric) const {
  json meta = {{"kind", "task"},
               {"task", to_string(task_.task)},
               {"head_size", task_.head_size},
               {"arch", arch_to_json(arch_)},
               {"age_mean", age_mean_},
               {"age_std", age_std_},
               {"epoch", epoch},
               {"val_metric", val_metric}};
  auto tensors = backbone_tensors(*backbone_);
  std::vector<nn::Param<float>*> hp;
  head_->parameters(hp);
  for (auto* p : hp) tensors.push_back(&p->value);
  write_checkpoint(path, meta, tensors);
}

AttributeModel AttributeModel::load(const std::filesystem::path& path) {
  auto raw = read_checkpoint(path);
  try {
    if (raw.meta.at("kind") != "task") throw CorruptCheckpoint(path.string() + ": not a task checkpoint");
    TaskSpec spec = TaskSpec::for_task(parse_task(raw.meta.at("task").get<std::string>()));
    spec.head_size = raw.meta.at("head_size").get<int>();
    AttributeModel model(spec, arch_from_json(raw.meta.at("arch")), 0);
    model.age_mean_ = raw.meta.at("age_mean").get<double>();
    model.age_std_ = raw.meta.at("age_std").get<double>();
    auto tensors = backbone_tensors(*model.backbone_);
    std::vector<nn::Param<float>*> hp;
    model.head_->parameters(hp);
    for (auto* p : hp) tensors.push_back(&p->value);
    if (raw.meta.at("shapes").size() != tensors.size()) throw CorruptCheckpoint(path.string() + ": tensor count");
    restore(raw, tensors);
    return model;
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(path.string() + ": " + e.what());
  } catch (const ConfigMismatch& e) {
    throw CorruptCheckpoint(path.string() + ": " + e.what());
  }
}

void AttributeModel::load_backbone(const std::filesystem::path& path) {
  auto raw = read_checkpoint(path);
  try {
    if (arch_from_json(raw.meta.at("arch")) != arch_)
      throw ConfigMismatch(path.string() + ": backbone architecture differs from the model");
    restore(raw, backbone_tensors(*backbone_));
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(path.string() + ": " + e.what());
  }
}

double validation_metric(const std::vector<PredictionRecord>& records) {
  const auto m = evaluate(records);
  return m.accuracy ? *m.accuracy : -*m.mae;
}

std::vector<PredictionRecord> predict(AttributeModel& model, const ImageSet& images, int batch_size) {
  std::vector<PredictionRecord> out;
  out.reserve(images.size());
  const Task task = model.task().task;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<PlanarImage> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(standardize(images.images[i]));
    const Mat logits = model.forward(batch, false);
    const Mat probs = is_classification(task) ? nn::softmax(logits) : logits;
    for (std::size_t i = start; i < end; ++i) {
      const auto j = static_cast<Eigen::Index>(i - start);
      PredictionRecord r;
      r.truth = images.labels[i];
      r.task = task;
      if (is_classification(task)) {
        Eigen::Index arg = 0;
        probs.col(j).maxCoeff(&arg);
        r.predicted_class = static_cast<int>(arg);
        r.scores.assign(probs.col(j).data(), probs.col(j).data() + probs.rows());
      } else {
        r.predicted_age = model.age_mean() + model.age_std() * static_cast<double>(logits(0, j));
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

PretrainResult pretrain_representation(const std::vector<PlanarImage>& images, const PretrainConfig& cfg,
                                       const std::filesystem::path& checkpoint_path) {
  const auto n = images.size();
  if (cfg.batch_size < 2 || n < 2 * static_cast<std::size_t>(cfg.batch_size))
    throw InsufficientData("pretraining needs at least 2 x batch_size = " + std::to_string(2 * cfg.batch_size) +
                           " images, got " + std::to_string(n));
  if (cfg.epochs < 1) throw std::invalid_argument("pretraining needs at least one epoch");

  std::mt19937_64 rng(cfg.seed);
  const int feat = cfg.arch.feature_dim();
  const int hidden = feat;
  nn::ResNet<float> query(cfg.arch, rng);
  nn::Sequential<float> query_head;
  query_head.add<nn::Linear<float>>(feat, hidden, rng);
  query_head.add<nn::ReLU<float>>();
  query_head.add<nn::Linear<float>>(hidden, cfg.projection_dim, rng);

  // Key encoder starts as an exact copy of the query encoder.
  std::mt19937_64 key_rng(cfg.seed);
  nn::ResNet<float> key(cfg.arch, key_rng);
  nn::Sequential<float> key_head;
  key_head.add<nn::Linear<float>>(feat, hidden, key_rng);
  key_head.add<nn::ReLU<float>>();
  key_head.add<nn::Linear<float>>(hidden, cfg.projection_dim, key_rng);

  std::vector<nn::Param<float>*> q_params, k_params;
  query.parameters(q_params);
  query_head.parameters(q_params);
  key.parameters(k_params);
  key_head.parameters(k_params);
  for (std::size_t i = 0; i < q_params.size(); ++i) k_params[i]->value = q_params[i]->value;

  nn::Sgd<float> opt(q_params, static_cast<float>(cfg.learning_rate), static_cast<float>(cfg.momentum),
                     static_cast<float>(cfg.weight_decay));
  const float temp = static_cast<float>(cfg.temperature);
  const float m = static_cast<float>(cfg.key_momentum);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  auto encode_keys = [&](const std::vector<PlanarImage>& views) {
    Eigen::VectorXf norms;
    return l2_normalize(key_head.forward(key.forward(make_batch(views), true), true).data, norms);
  };

  // Queue of negatives, warmed with keys of the initial encoder.
  const std::size_t queue_len = std::min<std::size_t>(static_cast<std::size_t>(cfg.queue_size), n);
  Mat queue(cfg.projection_dim, static_cast<Eigen::Index>(queue_len));
  std::size_t queue_ptr = 0;
  auto enqueue = [&](const Mat& keys) {
    for (Eigen::Index j = 0; j < keys.cols(); ++j) {
      queue.col(static_cast<Eigen::Index>(queue_ptr)) = keys.col(j);
      queue_ptr = (queue_ptr + 1) % queue_len;
    }
  };
  for (std::size_t start = 0; start < queue_len; start += batch) {
    std::vector<PlanarImage> views;
    for (std::size_t i = start; i < std::min(queue_len, start + batch); ++i)
      views.push_back(standardize(contrastive_view(images[i], rng)));
    if (views.size() < 2) break;
    enqueue(encode_keys(views));
  }
  queue_ptr = 0;

  // Fixed view pairs scored against the warm-up queue after every epoch, so
  // the curve tracks the encoders rather than fresh augmentation draws.
  const Mat probe_queue = queue;
  std::vector<PlanarImage> probe_q, probe_k;
  {
    std::mt19937_64 probe_rng(cfg.seed ^ 0x5851F42D4C957F2Dull);
    for (std::size_t i = 0; i < batch; ++i) {
      probe_q.push_back(standardize(contrastive_view(images[i], probe_rng)));
      probe_k.push_back(standardize(contrastive_view(images[i], probe_rng)));
    }
  }
  std::vector<Mat*> stats;
  query.buffers(stats);
  query_head.buffers(stats);
  key.buffers(stats);
  key_head.buffers(stats);
  auto probe_loss = [&] {
    std::vector<Mat> saved;
    for (auto* b : stats) saved.push_back(*b);
    const Mat k = encode_keys(probe_k);
    Eigen::VectorXf norms;
    const Mat q = l2_normalize(query_head.forward(query.forward(make_batch(probe_q), true), true).data, norms);
    Mat logits(1 + probe_queue.cols(), q.cols());
    logits.row(0) = (q.array() * k.array()).colwise().sum().matrix() / temp;
    logits.bottomRows(probe_queue.cols()) = probe_queue.transpose() * q / temp;
    for (std::size_t i = 0; i < stats.size(); ++i) *stats[i] = saved[i];
    return static_cast<double>(nn::cross_entropy<float>(logits, std::vector<int>(q.cols(), 0)).loss);
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  PretrainResult result;
  result.checkpoint = checkpoint_path;
  result.loss_curve.push_back(probe_loss());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start + batch <= n; start += batch) {
      std::vector<PlanarImage> vq, vk;
      for (std::size_t i = start; i < start + batch; ++i) {
        vq.push_back(standardize(contrastive_view(images[order[i]], rng)));
        vk.push_back(standardize(contrastive_view(images[order[i]], rng)));
      }
      const Mat k = encode_keys(vk);
      Eigen::VectorXf q_norms;
      const Mat z = query_head.forward(query.forward(make_batch(vq), true), true).data;
      const Mat q = l2_normalize(z, q_norms);

      // logits: row 0 positive, rows 1..K queue negatives
      Mat logits(1 + queue.cols(), q.cols());
      logits.row(0) = (q.array() * k.array()).colwise().sum().matrix() / temp;
      logits.bottomRows(queue.cols()) = queue.transpose() * q / temp;
      const auto ce = nn::cross_entropy<float>(logits, std::vector<int>(q.cols(), 0));
      loss_sum += ce.loss;
      ++steps;

      const Mat dq = (k.array().rowwise() * ce.grad.row(0).array()).matrix() / temp +
                     queue * ce.grad.bottomRows(queue.cols()) / temp;
      Mat dz(dq.rows(), dq.cols());
      for (Eigen::Index j = 0; j < dq.cols(); ++j)
        dz.col(j) = (dq.col(j) - q.col(j) * q.col(j).dot(dq.col(j))) / q_norms(j);

      opt.zero_grad();
      query.backward(query_head.backward(nn::Tensor<float>(dz, static_cast<int>(dz.cols()), 1, 1)));
      opt.step();
      for (std::size_t i = 0; i < q_params.size(); ++i)
        k_params[i]->value = m * k_params[i]->value + (1.0f - m) * q_params[i]->value;
      enqueue(k);
    }
    result.train_loss.push_back(loss_sum / std::max(steps, 1));
    result.loss_curve.push_back(probe_loss());
  }

  json meta = {{"kind", "backbone"}, {"arch", arch_to_json(cfg.arch)}, {"epochs", cfg.epochs}, {"seed", cfg.seed}};
  write_checkpoint(checkpoint_path, meta, backbone_tensors(query));
  return result;
}

FinetuneResult finetune(const TaskSpec& task, const ImageSet& train, const ImageSet& val, const TrainConfig& cfg,
                        const std::filesystem::path& checkpoint_path, const EpochCallback& on_epoch) {
  task.validate();
  if (train.size() == 0) throw EmptyPartition("train partition is empty");
  if (val.size() == 0) throw EmptyPartition("val partition is empty");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");

  AttributeModel model(task, cfg.arch, cfg.seed);
  if (cfg.pretrain) model.load_backbone(*cfg.pretrain);

  if (task.task == Task::age_reg) {
    double mean = 0.0, sq = 0.0;
    for (const auto& l : train.labels) mean += l.age_years;
    mean /= static_cast<double>(train.size());
    for (const auto& l : train.labels) sq += (l.age_years - mean) * (l.age_years - mean);
    const double sd = std::sqrt(sq / static_cast<double>(train.size()));
    model.set_age_scaling(mean, sd > 1e-6 ? sd : 1.0);
  }

  nn::Sgd<float> opt(model.parameters(), static_cast<float>(cfg.learning_rate), static_cast<float>(cfg.momentum),
                     static_cast<float>(cfg.weight_decay));
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);

  FinetuneResult result;
  // epoch 0 takes part in selection so a checkpoint always exists
  const double initial = validation_metric(predict(model, val));
  result.history.push_back({0, initial, {}});
  std::vector<double> metrics{initial};
  model.save(checkpoint_path, 0, initial);
  result.best = {0, initial, checkpoint_path};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      if (end - start < 2 && order.size() >= 2) continue;  // batch norm needs two samples
      std::vector<PlanarImage> xs;
      std::vector<int> cls;
      std::vector<float> target;
      for (std::size_t i = start; i < end; ++i) {
        auto s = augment({train.images[order[i]], train.labels[order[i]]}, cfg.augmentation, rng);
        xs.push_back(standardize(s.pixels));
        if (is_classification(task.task))
          cls.push_back(truth_class(s.label, task.task));
        else
          target.push_back(static_cast<float>((s.label.age_years - model.age_mean()) / model.age_std()));
      }
      const Mat out = model.forward(xs, true);
      auto loss = is_classification(task.task) ? nn::cross_entropy<float>(out, cls)
                                               : nn::mean_squared_error<float>(out, target);
      opt.zero_grad();
      model.backward(loss.grad);
      opt.step();
      loss_sum += loss.loss;
      ++steps;
    }
    const double metric = validation_metric(predict(model, val));
    metrics.push_back(metric);
    const double mean_loss = loss_sum / std::max(steps, 1);
    result.train_loss.push_back(mean_loss);
    result.history.push_back({epoch, metric, {}});
    if (select_checkpoint(metrics) == metrics.size() - 1) {
      model.save(checkpoint_path, epoch, metric);
      result.best = {epoch, metric, checkpoint_path};
    }
    if (on_epoch) on_epoch(epoch, mean_loss, metric);
  }
  return result;
}

FinetuneResult finetune(const TaskSpec& task, const SplitManifest& split, const std::filesystem::path& image_dir,
                        const TrainConfig& config, const std::filesystem::path& checkpoint_path,
                        const EpochCallback& on_epoch) {
  task.validate();
  const auto train_labels = split.labels(Partition::train);
  const auto val_labels = split.labels(Partition::val);
  if (train_labels.empty()) throw EmptyPartition("split has no train entries");
  if (val_labels.empty()) throw EmptyPartition("split has no val entries");
  const int size = config.arch.input_size;
  return finetune(task, load_image_set(image_dir, train_labels, size), load_image_set(image_dir, val_labels, size),
                  config, checkpoint_path, on_epoch);
}

}  // namespace maskprivacy
