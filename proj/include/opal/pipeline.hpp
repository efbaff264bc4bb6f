#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opal/awr.hpp"
#include "opal/errors.hpp"
#include "opal/evaluation.hpp"
#include "opal/labeling.hpp"

namespace opal {

struct PipelineConfig {
  std::string env = "umaze-mini";
  std::uint64_t seed = 0;
  std::size_t dataset_steps = 50000;
  std::size_t traj_len = 1000;
  std::string dataset_path;  // load this dataset instead of generating one
  OpalConfig opal{};
  AwrConfig awr{};
  std::size_t eval_episodes = 100;
  std::size_t eval_horizon = 0;  // 0: the environment's horizon
  std::vector<std::string> degradation_envs;  // empty: just `env`
  std::vector<std::uint64_t> degradation_seeds;  // empty: just `seed`
};

// Every key is optional; unknown keys and bad values throw ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

// FNV-1a (64-bit) of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& config);

// A pipeline stage failed; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

OfflineDataset make_dataset(const PipelineConfig& config);

std::size_t eval_horizon(const PipelineConfig& config, const Environment& env);

// Reference scores on one dataset: GT-reward AWR (greedy) and the uniform
// random policy (sampled), evaluated on shared start states.
struct Baselines {
  double gt = 0.0;
  double random = 0.0;
};
Baselines evaluate_baselines(const PipelineConfig& config, const Environment& env,
                             const OfflineDataset& dataset, std::uint64_t seed);

double evaluate_greedy(const PipelineConfig& config, const Environment& env, const PolicyModel& policy,
                       std::uint64_t seed);

struct PipelineResult {
  RunReport report;
  OpalResult loop;
  PolicyModel policy;
  std::uint64_t env_steps_during_learning = 0;
};

// gen-data -> labeling loop -> relabel -> AWR -> evaluation. Writes dataset,
// preferences, reward and policy checkpoints, report.json and manifest.json
// into out_dir when it is non-empty. labeler defaults to the oracle.
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir,
                            Labeler* labeler = nullptr);

nlohmann::json report_json(const PipelineResult& result);

struct DegradationRow {
  std::string env;
  double gt = 0.0;
  double avg = 0.0;
  double zero = 0.0;
  double bc = 0.0;
  double random = 0.0;
  double degradation_pct = 0.0;
  bool flagged = false;
  std::size_t seeds = 0;
};

// Mean scores over degradation_seeds, one row per degradation env.
std::vector<DegradationRow> run_degradation_study(const PipelineConfig& config);
nlohmann::json to_json(const std::vector<DegradationRow>& rows);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace opal
