#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "opal/awr.hpp"
#include "opal/env.hpp"
#include "opal/reward_model.hpp"

namespace opal {

enum class ActionMode { GREEDY, SAMPLE };

struct EvalResult {
  double mean_return = 0.0;             // undiscounted ground truth
  double mean_discounted_return = 0.0;  // gamma = 0.99
  double standard_error = 0.0;
  std::vector<double> episode_returns;
};

inline constexpr double kEvalGamma = 0.99;

// Rolls out n_episodes from env's initial-state distribution. Episode i uses
// its own seed stream, and returns are summed in episode order.
EvalResult evaluate_policy(const PolicyModel& policy, const Environment& env, std::size_t n_episodes,
                           std::size_t horizon, std::uint64_t seed, ActionMode mode);

// 100 * (x - random) / (gt - random).
double normalized_score(double x, double gt_score, double random_score);

// max(GT - max(AVG, ZERO, RANDOM), 0) / |GT| * 100.
double degradation_pct(double gt, double avg, double zero, double random);

inline constexpr double kDegradationThreshold = 25.0;

// Published EnsemDis score on maze2d-umaze (normalized scale). Kept for
// reference only; desk-scale runs are not expected to reproduce it.
inline constexpr double kReferenceUmazeEnsembleDisagreement = 93.5;

// Fraction of records whose labeled winner gets posterior-mean Bradley-Terry
// probability strictly above 0.5.
double holdout_accuracy(const RewardPosterior& posterior, std::span<const PreferenceRecord> held_out,
                        double beta, std::uint64_t seed = 0);

enum class RewardKind { LEARNED, GROUND_TRUTH, ZERO, AVERAGE };

const char* to_string(RewardKind kind);

struct RewardSource {
  RewardKind kind = RewardKind::ZERO;
  const RewardPosterior* posterior = nullptr;  // LEARNED only
  std::uint64_t seed = 0;
};

// Per-transition rewards for AWR. GROUND_TRUTH and AVERAGE read the stored
// gt_reward, which is why this lives with evaluation.
std::vector<double> resolve_rewards(const RewardSource& source, const OfflineDataset& dataset);

struct Rollout {
  std::size_t episode = 0;
  std::vector<std::array<double, 2>> points;  // display coordinates per visited state

  bool operator==(const Rollout&) const = default;
};

std::vector<Rollout> collect_rollouts(const PolicyModel& policy, const Environment& env, std::size_t n,
                                      std::size_t horizon, std::uint64_t seed, ActionMode mode);

// Same point format as the labeling protocol's snippets, plus start and end markers.
void export_rollouts(const PolicyModel& policy, const Environment& env, std::size_t n,
                     std::uint64_t seed, const std::filesystem::path& path,
                     ActionMode mode = ActionMode::GREEDY);
void write_rollouts(const std::vector<Rollout>& rollouts, const Environment& env,
                    const std::filesystem::path& path);
std::vector<Rollout> load_rollouts(const std::filesystem::path& path);

// Total signed angle swept around center, summed over every rollout.
double net_angular_progress(std::span<const Rollout> rollouts, std::array<double, 2> center);

// Results of one run, written as a JSON report.
struct RunReport {
  std::string env;
  std::string acquisition;
  std::string posterior_kind;
  std::size_t queries_used = 0;
  double policy_return = 0.0;
  double gt_return = 0.0;
  double random_return = 0.0;
  double normalized_score = 0.0;
  std::vector<double> holdout_accuracy;  // after initial training, then per round
};

nlohmann::json to_json(const RunReport& report);

}  // namespace opal
