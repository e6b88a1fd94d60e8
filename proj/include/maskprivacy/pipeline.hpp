#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskprivacy/dataset.hpp"
#include "maskprivacy/mask.hpp"
#include "maskprivacy/models.hpp"
#include "maskprivacy/privacy.hpp"

namespace maskprivacy {

/// Thrown by run_pipeline; `stage` names the step that failed.
struct StageFailure : std::runtime_error {
  StageFailure(std::string stage_name, const std::string& what)
      : std::runtime_error("stage '" + stage_name + "' failed: " + what), stage(std::move(stage_name)) {}
  std::string stage;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SplitSettings {
  SplitKind kind = SplitKind::random;
  std::uint64_t seed = 0;
  std::vector<Attribute> balance_on;
  std::size_t quota = 0;
};

struct RunConfig {
  std::filesystem::path dataset_path;
  std::filesystem::path outputs_dir;
  MaskSpec mask;
  SplitSettings split;
  std::vector<TaskSpec> tasks;
  TrainConfig train;
  std::optional<PretrainConfig> pretrain;
  std::optional<std::filesystem::path> survey_path;  // RII source; reference weights otherwise
  Predictability face_predictability = reference::kFaceSota;
  /// Empty = every stage. Names: split, mask, pretrain, train, predict, analyze, pvi.
  std::vector<std::string> stages;
  int jobs = 1;
};

nlohmann::json to_json(const RunConfig& c);
/// Throws ConfigError with the offending field on malformed input.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

struct Diagnostic {
  std::string field;
  std::string message;  // what is wrong and how to fix it
};

/// Empty iff the config is runnable.
std::vector<Diagnostic> validate_config(const RunConfig& config);

struct StageRecord {
  std::string name;
  std::string status;  // "ran", "skipped" or "failed"
  std::string fingerprint;  // digest over config slice and input checksums
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to outputs_dir -> sha256
  double seconds = 0.0;
  std::string error;
};

struct RunManifest {
  nlohmann::json config;
  std::string tool_version;
  std::vector<StageRecord> stages;
  bool training_bit_reproducible = false;

  const StageRecord* find(const std::string& stage) const;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Runs the requested stages in order. A stage is skipped when the previous
/// manifest in outputs_dir has the same fingerprint and its outputs still
/// hash to the recorded values. The manifest is written to
/// outputs_dir/run_manifest.json after every stage, so a failure keeps the
/// partial record; the failure is rethrown as StageFailure.
RunManifest run_pipeline(const RunConfig& config, std::ostream* log = nullptr);

}  // namespace maskprivacy
