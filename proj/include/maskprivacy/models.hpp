#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskprivacy/augment.hpp"
#include "maskprivacy/dataset.hpp"
#include "maskprivacy/nn/resnet.hpp"
#include "maskprivacy/records.hpp"

namespace maskprivacy {

struct ConfigMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyPartition : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LossKind { cross_entropy, mean_squared_error };

struct TaskSpec {
  Task task = Task::sex_cls;
  int head_size = 2;
  LossKind loss = LossKind::cross_entropy;

  static TaskSpec for_task(Task t);
  /// Throws ConfigMismatch when head size or loss disagree with the task.
  void validate() const;
};

struct TrainConfig {
  int epochs = 3500;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 0.0;
  AugmentPolicy augmentation = AugmentPolicy::basic;
  std::optional<std::filesystem::path> pretrain;  // backbone checkpoint
  nn::ResNetConfig arch;
  std::uint64_t seed = 0;
};

struct PretrainConfig {
  int epochs = 3038;
  int batch_size = 128;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int queue_size = 65536;
  double temperature = 0.2;
  double key_momentum = 0.999;
  int projection_dim = 128;
  nn::ResNetConfig arch;
  std::uint64_t seed = 0;
};

struct CheckpointRecord {
  int epoch = 0;
  double val_metric = 0.0;  // accuracy, or negative MAE for regression
  std::filesystem::path path;
};

/// Index of the maximum; the earliest wins ties. Throws on empty input.
std::size_t select_checkpoint(std::span<const double> val_metrics);

/// Images held in memory at the model resolution, aligned with labels.
struct ImageSet {
  std::vector<AttributeLabel> labels;
  std::vector<PlanarImage> images;

  std::size_t size() const { return labels.size(); }
};

/// Loads `labels` from `dir` (by image_id) at `size` x `size`.
ImageSet load_image_set(const std::filesystem::path& dir, const std::vector<AttributeLabel>& labels, int size);

/// Backbone plus a task head. Regression outputs a standardised age that
/// is mapped back to years with the stored train-set mean and deviation.
class AttributeModel {
 public:
  AttributeModel(const TaskSpec& task, const nn::ResNetConfig& arch, std::uint64_t seed);

  const TaskSpec& task() const { return task_; }
  const nn::ResNetConfig& arch() const { return arch_; }

  /// head_size x N outputs for standardised input columns.
  nn::Matrix<float> forward(const std::vector<PlanarImage>& batch, bool train);
  void backward(const nn::Matrix<float>& grad);

  std::vector<nn::Param<float>*> parameters();
  nn::ResNet<float>& backbone() { return *backbone_; }

  void set_age_scaling(double mean, double stddev) {
    age_mean_ = mean;
    age_std_ = stddev;
  }
  double age_mean() const { return age_mean_; }
  double age_std() const { return age_std_; }

  void save(const std::filesystem::path& path, int epoch, double val_metric) const;
  static AttributeModel load(const std::filesystem::path& path);
  /// Copies backbone weights and norm statistics from a backbone checkpoint.
  void load_backbone(const std::filesystem::path& path);

 private:
  TaskSpec task_;
  nn::ResNetConfig arch_;
  std::unique_ptr<nn::ResNet<float>> backbone_;
  std::unique_ptr<nn::Linear<float>> head_;
  double age_mean_ = 0.0;
  double age_std_ = 1.0;
};

/// Stacks standardised planar images into a 3 x (N*S*S) tensor.
nn::Tensor<float> make_batch(const std::vector<PlanarImage>& images);

struct PretrainResult {
  /// Contrastive loss on a fixed set of view pairs against the warm-up
  /// queue: entry 0 before any update, entry e after epoch e.
  std::vector<double> loss_curve;
  /// Mean training loss of epoch e at index e-1 (fresh views each step).
  std::vector<double> train_loss;
  std::filesystem::path checkpoint;
};

/// Momentum-contrast pretraining of the backbone with a two-layer projection
/// head. Throws InsufficientData when fewer than 2 * batch_size images.
PretrainResult pretrain_representation(const std::vector<PlanarImage>& images, const PretrainConfig& config,
                                       const std::filesystem::path& checkpoint_path);

struct FinetuneResult {
  CheckpointRecord best;
  std::vector<CheckpointRecord> history;  // epoch 0 = before any update
  std::vector<double> train_loss;         // per epoch, 1-based epochs at index e-1
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_metric)>;

/// End-to-end fine-tuning; evaluates on `val` after every epoch and keeps
/// the best-validation checkpoint at `checkpoint_path`.
FinetuneResult finetune(const TaskSpec& task, const ImageSet& train, const ImageSet& val, const TrainConfig& config,
                        const std::filesystem::path& checkpoint_path, const EpochCallback& on_epoch = {});

/// Reads the split, loads train/val images from `image_dir`, then fine-tunes.
FinetuneResult finetune(const TaskSpec& task, const SplitManifest& split, const std::filesystem::path& image_dir,
                        const TrainConfig& config, const std::filesystem::path& checkpoint_path,
                        const EpochCallback& on_epoch = {});

std::vector<PredictionRecord> predict(AttributeModel& model, const ImageSet& images, int batch_size = 64);

/// Validation metric for a record set: accuracy or -MAE.
double validation_metric(const std::vector<PredictionRecord>& records);

}  // namespace maskprivacy
