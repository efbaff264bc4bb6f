#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "opal/acquisition.hpp"
#include "opal/errors.hpp"
#include "opal/reward_model.hpp"
#include "opal/trajectory.hpp"

namespace opal {

struct QuerySchedule {
  std::size_t n_initial = 5;
  std::size_t epochs_initial = 5;
  std::size_t pairs_per_round = 1;
  std::size_t epochs_per_round = 1;
  std::size_t n_rounds = 10;

  void validate() const;
  std::size_t total_budget() const { return n_initial + n_rounds * pairs_per_round; }

  // 5 random pairs and 5 epochs, then 10 rounds of one query and one epoch.
  static QuerySchedule maze() { return {}; }
  // 50 initial pairs, 10 queries per round.
  static QuerySchedule high_dimensional() { return {50, 5, 10, 1, 10}; }

  bool operator==(const QuerySchedule&) const = default;
};

nlohmann::json to_json(const QuerySchedule& s);
QuerySchedule schedule_from_json(const nlohmann::json& j);

enum class Answer { A, B, TIE, SKIP };

const char* to_string(Answer a);
Answer answer_from_string(const std::string& s);

using SnippetReturnFn = std::function<double(const Snippet&)>;

// Compares undiscounted ground-truth returns; exact equality is a TIE.
Answer oracle_label(const Snippet& a, const Snippet& b, const SnippetReturnFn& gt_return);

class LabelingAborted : public Error {
 public:
  using Error::Error;
};

class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual LabelerKind kind() const = 0;
  // May throw LabelingAborted.
  virtual Answer answer(const CandidatePair& pair) = 0;
};

// Ground-truth labeler. Looks snippets up in the full (reward-carrying)
// dataset by source id and offset.
class OracleLabeler final : public Labeler {
 public:
  explicit OracleLabeler(const OfflineDataset& dataset);

  LabelerKind kind() const override { return LabelerKind::ORACLE; }
  Answer answer(const CandidatePair& pair) override;
  double gt_return(const Snippet& snippet) const;

 private:
  const OfflineDataset& dataset_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TranscriptEntry {
  PairId pair_id = 0;
  Answer answer = Answer::A;
  bool operator==(const TranscriptEntry&) const = default;
};

// Replays recorded answers (checking each pair id), then defers to `live`.
class ReplayLabeler final : public Labeler {
 public:
  ReplayLabeler(std::vector<TranscriptEntry> transcript, Labeler& live);

  LabelerKind kind() const override { return live_.kind(); }
  Answer answer(const CandidatePair& pair) override;
  bool replaying() const { return next_ < transcript_.size(); }

 private:
  std::vector<TranscriptEntry> transcript_;
  std::size_t next_ = 0;
  Labeler& live_;
};

struct OpalConfig {
  RewardModelConfig reward{};
  PosteriorKind posterior_kind = PosteriorKind::ENSEMBLE;
  Acquisition acquisition = Acquisition::DISAGREE;
  QuerySchedule schedule{};
  std::size_t pool_pairs = 2000;
  std::size_t snippet_len = 50;
  std::size_t held_out_pairs = 500;
  bool rebuild_pool = false;
};

struct RoundMetrics {
  std::size_t round = 0;  // 0 = after the initial random batch
  std::size_t labeled = 0;
  std::optional<double> holdout_accuracy;
  std::vector<double> train_loss;
};

struct OpalResult {
  RewardPosterior posterior;
  PreferenceBuffer buffer;
  std::vector<RoundMetrics> rounds;
  std::vector<TranscriptEntry> transcript;
  std::vector<PairId> discarded;  // ties and skips
  std::vector<PairId> pool_ids;   // pair ids of the (first) candidate pool
};

// Observer hooks for the interactive session; all optional.
struct LoopHooks {
  std::function<void(const std::vector<TranscriptEntry>&)> on_answer;  // checkpoint
  std::function<void(const char* status)> on_status;
  std::function<void(std::size_t labeled)> on_progress;
};

// Active preference learning loop: held-out set, candidate pool, initial random
// batch, then rounds of acquisition + labeling + training. Deterministic in
// seed and the sequence of answers. evaluator, when given, labels the held-out
// pairs and is never consulted for training labels.
OpalResult run_opal_loop(const RewardFreeDataset& dataset, const OpalConfig& config, Labeler& labeler,
                         std::uint64_t seed, const OracleLabeler* evaluator = nullptr,
                         const LoopHooks& hooks = {});

nlohmann::json to_json(const std::vector<TranscriptEntry>& transcript);
std::vector<TranscriptEntry> transcript_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PreferenceBuffer& buffer);
PreferenceBuffer buffer_from_json(const nlohmann::json& j);

}  // namespace opal
