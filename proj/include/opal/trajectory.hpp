#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opal {

using State = std::vector<double>;

struct Transition {
  State state;
  int action = 0;
  State next_state;
  // Only the oracle labeler and the evaluator may read this.
  std::optional<double> gt_reward;

  bool operator==(const Transition&) const = default;
};

struct Trajectory {
  std::string id;
  std::vector<Transition> transitions;
  std::map<std::string, std::string> meta;

  std::size_t size() const { return transitions.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct Snippet {
  std::string source_id;
  std::size_t start = 0;
  std::size_t length = 0;
  std::vector<Transition> transitions;

  bool operator==(const Snippet&) const = default;
};

enum class Preference { A_PREFERRED, B_PREFERRED };
enum class LabelerKind { ORACLE, HUMAN };

using PairId = std::uint64_t;

struct PreferenceRecord {
  PairId pair_id = 0;
  Snippet snippet_a;
  Snippet snippet_b;
  Preference label = Preference::A_PREFERRED;
  LabelerKind labeler = LabelerKind::ORACLE;

  const Snippet& winner() const {
    return label == Preference::A_PREFERRED ? snippet_a : snippet_b;
  }
  const Snippet& loser() const {
    return label == Preference::A_PREFERRED ? snippet_b : snippet_a;
  }
  bool operator==(const PreferenceRecord&) const = default;
};

struct OfflineDataset {
  static constexpr int kFormatVersion = 1;

  std::string env_name;
  std::size_t state_dim = 0;
  std::size_t action_count = 0;
  std::vector<Trajectory> trajectories;
  int format_version = kFormatVersion;

  std::size_t transition_count() const;
  const Trajectory& find(const std::string& id) const;
  bool operator==(const OfflineDataset&) const = default;
};

// Throws std::invalid_argument if any trajectory/dataset invariant fails:
// non-empty trajectories, state dimensions, action range, exact chaining.
void validate(const Trajectory& traj, std::size_t state_dim, std::size_t action_count);
void validate(const OfflineDataset& dataset);

// Copy of `dataset` with every gt_reward erased. Everything on the learning
// path (pool construction, reward training, relabeling, AWR) takes this type,
// so ground truth cannot leak in by accident.
class RewardFreeDataset {
 public:
  explicit RewardFreeDataset(const OfflineDataset& dataset);

  const OfflineDataset& data() const { return data_; }
  const std::string& env_name() const { return data_.env_name; }
  std::size_t state_dim() const { return data_.state_dim; }
  std::size_t action_count() const { return data_.action_count; }
  const std::vector<Trajectory>& trajectories() const { return data_.trajectories; }
  std::size_t transition_count() const { return data_.transition_count(); }

 private:
  OfflineDataset data_;
};

Snippet make_snippet(const Trajectory& traj, std::size_t start, std::size_t length);

double discounted_return(const Trajectory& traj, double gamma, std::span<const double> rewards);

using StateRewardFn = std::function<double(std::span<const double>)>;

// Undiscounted sum of reward_fn over the snippet's states.
double snippet_return(const Snippet& snippet, const StateRewardFn& reward_fn);

}  // namespace opal
