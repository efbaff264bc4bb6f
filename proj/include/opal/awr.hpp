#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "opal/mlp.hpp"
#include "opal/reward_model.hpp"
#include "opal/trajectory.hpp"

namespace opal {

using ValueNet = Mlp;

// Softmax policy over discrete actions: one network output (logit) per action.
class PolicyModel {
 public:
  PolicyModel() = default;
  explicit PolicyModel(Mlp net);

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  std::size_t state_dim() const { return net_.input_dim(); }
  std::size_t action_count() const { return net_.output_dim(); }

  // (action_count x N) column-wise softmax of the logits.
  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& states) const;
  std::vector<double> probabilities(std::span<const double> state) const;
  // Highest-probability action; ties go to the lowest id.
  int greedy_action(std::span<const double> state) const;
  int sample_action(std::span<const double> state, Rng& rng) const;

  bool operator==(const PolicyModel&) const = default;

 private:
  Mlp net_;
};

// Uniform over actions for every state.
PolicyModel random_policy(std::size_t state_dim, std::size_t action_count);

struct AwrConfig {
  double gamma = 0.99;
  double temperature = 1.0;  // the AWR beta, unrelated to the Bradley-Terry beta
  double max_weight = 20.0;
  std::size_t iterations = 10;
  std::size_t value_epochs = 5;
  std::size_t policy_epochs = 5;
  std::size_t batch_size = 256;
  std::vector<std::size_t> hidden{64, 64};
  OptimizerConfig value_optimizer{OptimizerConfig::Kind::ADAM, 1e-3};
  OptimizerConfig policy_optimizer{OptimizerConfig::Kind::ADAM, 1e-3};
};

// Monte Carlo discounted return-to-go within each trajectory, in dataset
// transition order. rewards must have one entry per transition.
std::vector<double> compute_returns(const RewardFreeDataset& dataset, std::span<const double> rewards,
                                    double gamma);

// Mean squared error regression of V onto targets; returns the training-set
// MSE after each epoch.
std::vector<double> fit_value(ValueNet& value, const Eigen::MatrixXd& states,
                              std::span<const double> targets, std::size_t epochs,
                              const OptimizerConfig& optimizer, std::size_t batch_size, Rng& rng);

// w = min(exp((R - V) / temperature), max_weight).
std::vector<double> awr_weights(std::span<const double> returns, std::span<const double> values,
                                double temperature, double max_weight);

// Loss -(1/N) sum_t w_t log pi(a_t | s_t) and its gradient.
LossAndGrad weighted_log_likelihood_grad(const PolicyModel& policy, const Eigen::MatrixXd& states,
                                         std::span<const int> actions, std::span<const double> weights);

// Behavioral cloning loss -(1/N) sum_t log pi(a_t | s_t), computed on its own
// path so it can check the zero-reward reduction of AWR.
LossAndGrad bc_loss_and_grad(const PolicyModel& policy, const Eigen::MatrixXd& states,
                             std::span<const int> actions);

// Gradient steps on the weighted log-likelihood; returns the full-data loss
// after each epoch.
std::vector<double> awr_policy_update(PolicyModel& policy, const Eigen::MatrixXd& states,
                                      std::span<const int> actions, std::span<const double> weights,
                                      std::size_t epochs, const OptimizerConfig& optimizer,
                                      std::size_t batch_size, Rng& rng);

struct AwrTrace {
  std::vector<std::vector<double>> weights;        // per iteration, per transition
  std::vector<std::vector<double>> value_mse;      // per iteration, per epoch
  std::vector<std::vector<double>> policy_loss;    // per iteration, per epoch
};

// Alternates value fitting and weighted policy regression over a fixed
// dataset. Never touches an environment.
PolicyModel train_awr(const RewardFreeDataset& dataset, std::span<const double> rewards,
                      const AwrConfig& config, std::uint64_t seed, AwrTrace* trace = nullptr);

// Plain behavioral cloning with the same schedule of policy epochs as AWR.
PolicyModel train_bc(const RewardFreeDataset& dataset, const AwrConfig& config, std::uint64_t seed);

nlohmann::json to_json(const PolicyModel& policy);
PolicyModel policy_from_json(const nlohmann::json& j);
void save_policy(const PolicyModel& policy, const std::filesystem::path& path);
PolicyModel load_policy(const std::filesystem::path& path);

}  // namespace opal
