#include "opal/awr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "opal/errors.hpp"

namespace opal {

namespace {

struct FlatData {
  Eigen::MatrixXd states;
  std::vector<int> actions;
};

FlatData flatten(const RewardFreeDataset& dataset) {
  std::vector<std::vector<double>> states;
  FlatData out;
  states.reserve(dataset.transition_count());
  out.actions.reserve(dataset.transition_count());
  for (const auto& traj : dataset.trajectories()) {
    for (const auto& tr : traj.transitions) {
      states.push_back(tr.state);
      out.actions.push_back(tr.action);
    }
  }
  out.states = stack_states(states);
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

Mlp make_net(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return Mlp(sizes);
}

double value_mse(const ValueNet& value, const Eigen::MatrixXd& states, std::span<const double> targets) {
  const Eigen::MatrixXd v = value.forward(states);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = v(0, static_cast<Eigen::Index>(i)) - targets[i];
    total += d * d;
  }
  return total / static_cast<double>(targets.size());
}

}  // namespace

PolicyModel::PolicyModel(Mlp net) : net_(std::move(net)) {
  if (net_.dropout_rate() != 0.0) throw std::invalid_argument("policy networks do not use dropout");
}

Eigen::MatrixXd PolicyModel::probabilities(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd logits = net_.forward(states);
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    auto col = logits.col(j);
    col.array() = (col.array() - col.maxCoeff()).exp();
    col /= col.sum();
  }
  return logits;
}

std::vector<double> PolicyModel::probabilities(std::span<const double> state) const {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(state.size()), 1);
  for (std::size_t k = 0; k < state.size(); ++k) s(static_cast<Eigen::Index>(k), 0) = state[k];
  const Eigen::MatrixXd p = probabilities(s);
  return std::vector<double>(p.data(), p.data() + p.size());
}

int PolicyModel::greedy_action(std::span<const double> state) const {
  const auto p = probabilities(state);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

int PolicyModel::sample_action(std::span<const double> state, Rng& rng) const {
  const auto p = probabilities(state);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    acc += p[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(p.size() - 1);
}

PolicyModel random_policy(std::size_t state_dim, std::size_t action_count) {
  // Zero weights give zero logits, hence exactly uniform probabilities.
  return PolicyModel(Mlp({state_dim, action_count}));
}

std::vector<double> compute_returns(const RewardFreeDataset& dataset, std::span<const double> rewards,
                                    double gamma) {
  if (rewards.size() != dataset.transition_count()) {
    throw std::invalid_argument("reward count " + std::to_string(rewards.size()) +
                                " does not match dataset transition count " +
                                std::to_string(dataset.transition_count()));
  }
  std::vector<double> returns(rewards.size());
  std::size_t offset = 0;
  for (const auto& traj : dataset.trajectories()) {
    double acc = 0.0;
    for (std::size_t t = traj.size(); t-- > 0;) {
      acc = rewards[offset + t] + gamma * acc;
      returns[offset + t] = acc;
    }
    offset += traj.size();
  }
  return returns;
}

std::vector<double> fit_value(ValueNet& value, const Eigen::MatrixXd& states,
                              std::span<const double> targets, std::size_t epochs,
                              const OptimizerConfig& optimizer, std::size_t batch_size, Rng& rng) {
  const std::size_t n = targets.size();
  if (static_cast<std::size_t>(states.cols()) != n) {
    throw std::invalid_argument("state and target counts differ");
  }
  if (n == 0) return std::vector<double>(epochs, 0.0);
  const std::size_t batch = batch_size == 0 ? n : std::min(batch_size, n);
  Optimizer opt(optimizer, value.param_count());
  std::vector<double> grad(value.param_count());
  std::vector<double> curve;
  Mlp::Cache cache;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = shuffled_indices(n, rng);
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(batch, n - begin));
      const Eigen::MatrixXd x = gather_columns(states, idx);
      const Eigen::MatrixXd v = value.forward(x, nullptr, cache);
      Eigen::MatrixXd d(1, static_cast<Eigen::Index>(idx.size()));
      const double scale = 2.0 / static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        d(0, static_cast<Eigen::Index>(i)) = scale * (v(0, static_cast<Eigen::Index>(i)) - targets[idx[i]]);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      value.backward(cache, d, nullptr, grad);
      opt.step(value.params(), grad);
    }
    curve.push_back(value_mse(value, states, targets));
  }
  return curve;
}

std::vector<double> awr_weights(std::span<const double> returns, std::span<const double> values,
                                double temperature, double max_weight) {
  if (returns.size() != values.size()) throw std::invalid_argument("returns and values differ in size");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<double> w(returns.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::min(std::exp((returns[i] - values[i]) / temperature), max_weight);
  }
  return w;
}

LossAndGrad weighted_log_likelihood_grad(const PolicyModel& policy, const Eigen::MatrixXd& states,
                                         std::span<const int> actions, std::span<const double> weights) {
  const std::size_t n = actions.size();
  if (static_cast<std::size_t>(states.cols()) != n || weights.size() != n) {
    throw std::invalid_argument("states, actions and weights differ in size");
  }
  LossAndGrad out;
  out.grad.assign(policy.net().param_count(), 0.0);
  if (n == 0) return out;
  Mlp::Cache cache;
  const Eigen::MatrixXd logits = policy.net().forward(states, nullptr, cache);
  Eigen::MatrixXd d = logits;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto col = d.col(static_cast<Eigen::Index>(j));
    const double m = col.maxCoeff();
    col.array() = (col.array() - m).exp();
    const double z = col.sum();
    col /= z;
    const auto a = static_cast<Eigen::Index>(actions[j]);
    const double log_p = logits(a, static_cast<Eigen::Index>(j)) - m - std::log(z);
    out.loss -= weights[j] * log_p * inv_n;
    // d(-w log p_a)/d logits = w (p - onehot(a))
    col(a) -= 1.0;
    col *= weights[j] * inv_n;
  }
  policy.net().backward(cache, d, nullptr, out.grad);
  return out;
}

LossAndGrad bc_loss_and_grad(const PolicyModel& policy, const Eigen::MatrixXd& states,
                             std::span<const int> actions) {
  const std::size_t n = actions.size();
  if (static_cast<std::size_t>(states.cols()) != n) {
    throw std::invalid_argument("states and actions differ in size");
  }
  LossAndGrad out;
  out.grad.assign(policy.net().param_count(), 0.0);
  if (n == 0) return out;
  Mlp::Cache cache;
  const Eigen::MatrixXd logits = policy.net().forward(states, nullptr, cache);
  const Eigen::Index k = logits.rows();
  Eigen::MatrixXd d(k, logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    double z = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) z += std::exp(logits(a, j) - m);
    const Eigen::Index target = actions[static_cast<std::size_t>(j)];
    out.loss += -(logits(target, j) - m - std::log(z));
    for (Eigen::Index a = 0; a < k; ++a) {
      d(a, j) = (std::exp(logits(a, j) - m) / z - (a == target ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  out.loss /= static_cast<double>(n);
  policy.net().backward(cache, d, nullptr, out.grad);
  return out;
}

std::vector<double> awr_policy_update(PolicyModel& policy, const Eigen::MatrixXd& states,
                                      std::span<const int> actions, std::span<const double> weights,
                                      std::size_t epochs, const OptimizerConfig& optimizer,
                                      std::size_t batch_size, Rng& rng) {
  const std::size_t n = actions.size();
  if (n == 0) return std::vector<double>(epochs, 0.0);
  const std::size_t batch = batch_size == 0 ? n : std::min(batch_size, n);
  Optimizer opt(optimizer, policy.net().param_count());
  std::vector<double> curve;
  std::vector<int> a_batch;
  std::vector<double> w_batch;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = shuffled_indices(n, rng);
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(batch, n - begin));
      a_batch.clear();
      w_batch.clear();
      for (std::size_t i : idx) {
        a_batch.push_back(actions[i]);
        w_batch.push_back(weights[i]);
      }
      const auto lg = weighted_log_likelihood_grad(policy, gather_columns(states, idx), a_batch, w_batch);
      opt.step(policy.net().params(), lg.grad);
    }
    curve.push_back(weighted_log_likelihood_grad(policy, states, actions, weights).loss);
  }
  return curve;
}

PolicyModel train_awr(const RewardFreeDataset& dataset, std::span<const double> rewards,
                      const AwrConfig& config, std::uint64_t seed, AwrTrace* trace) {
  if (dataset.transition_count() == 0) throw std::invalid_argument("dataset has no transitions");
  const FlatData data = flatten(dataset);
  const std::vector<double> returns = compute_returns(dataset, rewards, config.gamma);

  std::vector<std::vector<double>> state_list;
  for (const auto& traj : dataset.trajectories()) {
    for (const auto& tr : traj.transitions) state_list.push_back(tr.state);
  }

  Rng init_rng = make_rng(seed, 6000);
  // Zero-initialized output layers: V starts at exactly 0 and the policy at
  // exactly uniform. With all-zero returns V then stays 0 and every weight is 1.
  ValueNet value = make_net(dataset.state_dim(), config.hidden, 1);
  value.init(init_rng, true);
  fit_input_normalization(value, state_list);
  Mlp policy_net = make_net(dataset.state_dim(), config.hidden, dataset.action_count());
  policy_net.init(init_rng, true);
  fit_input_normalization(policy_net, state_list);
  PolicyModel policy(std::move(policy_net));

  Rng value_rng = make_rng(seed, 6001);
  Rng policy_rng = make_rng(seed, 6002);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    auto mse = fit_value(value, data.states, returns, config.value_epochs, config.value_optimizer,
                         config.batch_size, value_rng);
    const Eigen::MatrixXd v = value.forward(data.states);
    const std::vector<double> values(v.data(), v.data() + v.size());
    const auto weights = awr_weights(returns, values, config.temperature, config.max_weight);
    auto loss = awr_policy_update(policy, data.states, data.actions, weights, config.policy_epochs,
                                  config.policy_optimizer, config.batch_size, policy_rng);
    if (trace != nullptr) {
      trace->weights.push_back(weights);
      trace->value_mse.push_back(std::move(mse));
      trace->policy_loss.push_back(std::move(loss));
    }
  }
  return policy;
}

PolicyModel train_bc(const RewardFreeDataset& dataset, const AwrConfig& config, std::uint64_t seed) {
  if (dataset.transition_count() == 0) throw std::invalid_argument("dataset has no transitions");
  const FlatData data = flatten(dataset);
  std::vector<std::vector<double>> state_list;
  for (const auto& traj : dataset.trajectories()) {
    for (const auto& tr : traj.transitions) state_list.push_back(tr.state);
  }
  Rng init_rng = make_rng(seed, 6000);
  // Consume the same initialization stream as train_awr so both start equal.
  ValueNet unused = make_net(dataset.state_dim(), config.hidden, 1);
  unused.init(init_rng, true);
  Mlp policy_net = make_net(dataset.state_dim(), config.hidden, dataset.action_count());
  policy_net.init(init_rng, true);
  fit_input_normalization(policy_net, state_list);
  PolicyModel policy(std::move(policy_net));

  Rng policy_rng = make_rng(seed, 6002);
  const std::size_t n = data.actions.size();
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<int> a_batch;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Optimizer opt(config.policy_optimizer, policy.net().param_count());
    for (std::size_t e = 0; e < config.policy_epochs; ++e) {
      const auto order = shuffled_indices(n, policy_rng);
      for (std::size_t begin = 0; begin < n; begin += batch) {
        const std::span<const std::size_t> idx(order.data() + begin, std::min(batch, n - begin));
        a_batch.clear();
        for (std::size_t i : idx) a_batch.push_back(data.actions[i]);
        const auto lg = bc_loss_and_grad(policy, gather_columns(data.states, idx), a_batch);
        opt.step(policy.net().params(), lg.grad);
      }
    }
  }
  return policy;
}

nlohmann::json to_json(const PolicyModel& policy) {
  return {{"format", "opal-policy-checkpoint"}, {"version", 1}, {"net", to_json(policy.net())}};
}

PolicyModel policy_from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != "opal-policy-checkpoint" || j.at("version").get<int>() != 1) {
    throw std::invalid_argument("not a version-1 policy checkpoint");
  }
  return PolicyModel(mlp_from_json(j.at("net")));
}

void save_policy(const PolicyModel& policy, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << to_json(policy).dump() << '\n';
}

PolicyModel load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return policy_from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw FormatError(0, e.what());
  }
}

}  // namespace opal
